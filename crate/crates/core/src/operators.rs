//! The weighted-derivative operators and the identities tying them together.
//!
//! For a smooth f on (0,∞) and lam > 0,
//!
//! ```text
//! c_k(f)(x)   = x^{1-lam} (x^{lam-1+k} f(x))^{(k)}
//! T_{n,k}(f)  = (-1)^n x^{-(n+lam-1)} (x^{k+n+lam-1} f^{(n)}(x))^{(k)}
//! g_k(f)(x)   = x^{-lam} (x^{lam-1+k} f(x))^{(k-1)}
//! ```
//!
//! All three expand into sums Σ a_j x^j f^{(j)}(x). Three routes produce the
//! c_k coefficients independently:
//!
//! - `Leibniz`: a_j = C(k,j) Γ(k+lam)/Γ(j+lam), straight product expansion;
//! - `KeyIdentity`: the (lam-1)-rising-factorial form
//!   Σ_j (lam-1)_{k-j} C(k,j) (x^j f)^{(j)}, expanded down to f-derivatives;
//! - `Recursion`: c_{k+1} = (lam+k) c_k + x c_k', realized by differentiating
//!   the coefficient vector term-wise, so no gamma ratios enter at all.
//!
//! The routes share only the evaluation of f's derivatives; agreement across
//! them is a real consistency check of the coefficient algebra.

use crate::error::{Error, Result};
use crate::funcspace::{DifferentiableFn, GSFunction};
use crate::measure::{Measure, ScanGrid};
use crate::specfun::{binomial, gamma_ratio, pochhammer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Route {
    Leibniz,
    KeyIdentity,
    Recursion,
}

impl Route {
    pub const ALL: [Route; 3] = [Route::Leibniz, Route::KeyIdentity, Route::Recursion];

    pub fn name(&self) -> &'static str {
        match self {
            Route::Leibniz => "leibniz",
            Route::KeyIdentity => "key_identity",
            Route::Recursion => "recursion",
        }
    }
}

/// Coefficients a_j of x^j f^{(j)}(x) in c_k(f)(x), for j = 0..=k.
pub fn c_coefficients(route: Route, lam: f64, k: usize) -> Result<Vec<f64>> {
    if !(lam > 0.0) {
        return Err(Error::Domain(format!("lam must be positive, got {lam}")));
    }
    match route {
        Route::Leibniz => {
            let mut a = vec![0.0; k + 1];
            for (j, aj) in a.iter_mut().enumerate() {
                *aj = binomial(k, j) * gamma_ratio(k as f64 + lam, j as f64 + lam)?;
            }
            Ok(a)
        }
        Route::KeyIdentity => {
            // (x^j f)^{(j)} = Σ_m C(j, j-m) (j!/m!) x^m f^{(m)}
            let mut a = vec![0.0; k + 1];
            for j in 0..=k {
                let outer = pochhammer(lam - 1.0, k - j) * binomial(k, j);
                if outer == 0.0 {
                    continue;
                }
                let mut fact_ratio = 1.0; // j!/m! for the current m, built downward
                for m in (0..=j).rev() {
                    a[m] += outer * binomial(j, j - m) * fact_ratio;
                    if m > 0 {
                        fact_ratio *= m as f64;
                    }
                }
            }
            Ok(a)
        }
        Route::Recursion => {
            // a^{(0)} = [1]; step i: new_j = (lam + i - 1 + j) old_j + old_{j-1}
            let mut a = vec![1.0];
            for i in 1..=k {
                let mut next = vec![0.0; a.len() + 1];
                for (j, &aj) in a.iter().enumerate() {
                    next[j] += (lam + (i - 1) as f64 + j as f64) * aj;
                    next[j + 1] += aj;
                }
                a = next;
            }
            Ok(a)
        }
    }
}

/// c_k(f)(x) by the chosen coefficient route.
pub fn c_op(f: &dyn DifferentiableFn, lam: f64, k: usize, x: f64, route: Route) -> Result<f64> {
    let coeffs = c_coefficients(route, lam, k)?;
    let mut total = 0.0;
    for (j, &a) in coeffs.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        total += a * x.powi(j as i32) * f.derivative(j, x)?;
    }
    Ok(total)
}

/// T_{n,k}(f)(x) = (-1)^n Σ_j C(k,j) Γ(n+k+lam)/Γ(n+j+lam) x^j f^{(n+j)}(x).
pub fn t_op(f: &dyn DifferentiableFn, lam: f64, n: usize, k: usize, x: f64) -> Result<f64> {
    if !(lam > 0.0) {
        return Err(Error::Domain(format!("lam must be positive, got {lam}")));
    }
    let mut total = 0.0;
    for j in 0..=k {
        let a = binomial(k, j) * gamma_ratio((n + k) as f64 + lam, (n + j) as f64 + lam)?;
        total += a * x.powi(j as i32) * f.derivative(n + j, x)?;
    }
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * total)
}

/// g_k(f) = x^{-lam} (x^{lam-1+k} f)^{(k-1)}, which equals c_{k-1} taken at
/// order parameter lam + 1.
pub fn g_op(f: &dyn DifferentiableFn, lam: f64, k: usize, x: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("g_op requires k >= 1".into()));
    }
    c_op(f, lam + 1.0, k - 1, x, Route::Leibniz)
}

/// Discrepancy between T_{n,k} and the n-th finite difference of c_k.
#[derive(Clone, Debug)]
pub struct TvsCReport {
    pub t_value: f64,
    pub fd_value: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
}

/// Compares T_{n,k}(f)(x) against (-1)^n times the n-th central finite
/// difference of x ↦ c_k(f)(x) with step h.
pub fn t_equals_deriv_c_check(
    f: &dyn DifferentiableFn,
    lam: f64,
    n: usize,
    k: usize,
    x: f64,
    h: f64,
) -> Result<TvsCReport> {
    if x - n as f64 * h <= 0.0 {
        return Err(Error::Domain(format!(
            "stencil leaves the domain: x={x}, n={n}, h={h}"
        )));
    }
    let t_value = t_op(f, lam, n, k, x)?;
    let mut fd = 0.0;
    for i in 0..=n {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let xi = x + (n as f64 / 2.0 - i as f64) * h;
        fd += sign * binomial(n, i) * c_op(f, lam, k, xi, Route::Leibniz)?;
    }
    fd /= h.powi(n as i32);
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let fd_value = sign * fd;
    let abs_gap = (t_value - fd_value).abs();
    let rel_gap = abs_gap / (1.0 + t_value.abs());
    Ok(TvsCReport {
        t_value,
        fd_value,
        abs_gap,
        rel_gap,
    })
}

/// c_k(f)(x) through the representing measure: ∫ e^{-xs} s^{lam-1} dμ_k(s)
/// plus the exact images of the symbolic constant and x^{-lam} parts.
///
/// A `NotAMeasure` error from the transform is meaningful: it says the
/// measure-side route cannot certify this k (atoms differentiate out of the
/// space of measures).
pub fn c_op_measure_side(f: &GSFunction, k: usize, x: f64) -> Result<f64> {
    let lam = f.lam();
    if k == 0 {
        return f.eval(x);
    }
    let mu = f.laplace_measure().ok_or_else(|| {
        Error::Domain("measure-side evaluation requires a Laplace-side measure".into())
    })?;
    let mut total = f.additive_constant() * pochhammer(lam, k);
    let derived = mu.derived(k)?;
    total += laplace_c_k(&derived, lam, x)?;
    Ok(total)
}

/// ∫ e^{-xs} s^{lam-1} dμ(s) for an already-transformed measure.
pub fn laplace_c_k(mu_k: &Measure, lam: f64, x: f64) -> Result<f64> {
    mu_k.weighted_laplace(x, lam - 1.0)
}

/// Both sides of the coefficient identity behind the key expansion:
///
/// ```text
/// Σ_{j=m}^k (lam-1)_{k-j} C(k,j) C(n+j, j-m) j!/m!  =  C(k,m) Γ(n+k+lam)/Γ(n+m+lam)
/// ```
#[derive(Clone, Debug)]
pub struct ChuReport {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
}

pub fn chu_vandermonde_check(lam: f64, n: usize, k: usize, m: usize) -> Result<ChuReport> {
    if m > k {
        return Err(Error::Domain(format!(
            "m must satisfy 0 <= m <= k, got m={m}, k={k}"
        )));
    }
    if !(lam > 0.0) {
        return Err(Error::Domain(format!("lam must be positive, got {lam}")));
    }
    let mut lhs = 0.0;
    for j in m..=k {
        let mut fact_ratio = 1.0; // j!/m!
        for i in (m + 1)..=j {
            fact_ratio *= i as f64;
        }
        lhs += pochhammer(lam - 1.0, k - j) * binomial(k, j) * binomial(n + j, j - m) * fact_ratio;
    }
    let rhs = binomial(k, m) * gamma_ratio((n + k) as f64 + lam, (n + m) as f64 + lam)?;
    let abs_gap = (lhs - rhs).abs();
    let rel_gap = abs_gap / (1.0 + lhs.abs().max(rhs.abs()));
    Ok(ChuReport {
        lhs,
        rhs,
        abs_gap,
        rel_gap,
    })
}

/// Adapter exposing x ↦ c_k(f)(x) as a differentiable function. Its n-th
/// derivative is (-1)^n T_{n,k}(f), which is exactly the relation the
/// two-index operator encodes.
pub struct COpFn<'a> {
    pub f: &'a dyn DifferentiableFn,
    pub lam: f64,
    pub k: usize,
}

impl<'a> DifferentiableFn for COpFn<'a> {
    fn max_order(&self) -> usize {
        self.f.max_order().saturating_sub(self.k)
    }

    fn derivative(&self, n: usize, x: f64) -> Result<f64> {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        Ok(sign * t_op(self.f, self.lam, n, self.k, x)?)
    }
}

/// Values of c_k (all routes) and T_{n,k} over a grid, with the largest
/// cross-route relative gap.
#[derive(Clone, Debug)]
pub struct OperatorTable {
    pub lam: f64,
    pub k_max: usize,
    pub n_max: usize,
    pub grid: Vec<f64>,
    /// c-route values indexed [route][k][grid point], routes in `Route::ALL` order.
    pub c_values: Vec<Vec<Vec<f64>>>,
    /// T values indexed [n][k][grid point].
    pub t_values: Vec<Vec<Vec<f64>>>,
    pub discrepancy: f64,
    /// Worst (route, k, x) behind `discrepancy`.
    pub discrepancy_witness: Option<(Route, usize, f64)>,
    /// Set when the grid reaches below 1e-6 with lam < 1, where the
    /// x^{1-lam} weight amplifies quadrature noise in the raw definition.
    pub low_x_warning: bool,
}

pub fn build_operator_table(
    f: &dyn DifferentiableFn,
    lam: f64,
    n_max: usize,
    k_max: usize,
    grid: &ScanGrid,
) -> Result<OperatorTable> {
    let points = grid.points().to_vec();
    let mut c_values =
        vec![vec![vec![0.0; points.len()]; k_max + 1]; Route::ALL.len()];
    // Coefficients once per (route, k); evaluation shares f-derivatives.
    for (ri, route) in Route::ALL.iter().enumerate() {
        for k in 0..=k_max {
            let coeffs = c_coefficients(*route, lam, k)?;
            for (ix, &x) in points.iter().enumerate() {
                let mut total = 0.0;
                for (j, &a) in coeffs.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    total += a * x.powi(j as i32) * f.derivative(j, x)?;
                }
                c_values[ri][k][ix] = total;
            }
        }
    }
    let mut t_values = vec![vec![vec![0.0; points.len()]; k_max + 1]; n_max + 1];
    for (n, tn) in t_values.iter_mut().enumerate() {
        for (k, tk) in tn.iter_mut().enumerate() {
            for (ix, &x) in points.iter().enumerate() {
                tk[ix] = t_op(f, lam, n, k, x)?;
            }
        }
    }

    let mut discrepancy = 0.0;
    let mut witness = None;
    for k in 0..=k_max {
        for (ix, &x) in points.iter().enumerate() {
            let reference = c_values[0][k][ix];
            let scale = 1.0 + reference.abs();
            for (ri, route) in Route::ALL.iter().enumerate().skip(1) {
                let gap = (c_values[ri][k][ix] - reference).abs() / scale;
                if gap > discrepancy {
                    discrepancy = gap;
                    witness = Some((*route, k, x));
                }
            }
            // T at n = 0 must coincide with the Leibniz route.
            let gap = (t_values[0][k][ix] - reference).abs() / scale;
            if gap > discrepancy {
                discrepancy = gap;
                witness = Some((Route::Leibniz, k, x));
            }
        }
    }

    Ok(OperatorTable {
        lam,
        k_max,
        n_max,
        grid: points.clone(),
        c_values,
        t_values,
        discrepancy,
        discrepancy_witness: witness,
        low_x_warning: lam < 1.0 && points.first().copied().unwrap_or(1.0) < 1e-6,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::SmoothDensity;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn kernel_atom(lam: f64) -> GSFunction {
        GSFunction::from_stieltjes_atoms(lam, &[(1.0, 1.0)]).unwrap()
    }

    #[test]
    fn c1_of_power_kernel() {
        // f = (x+1)^{-2}, lam = 2: c_1 = 2f + x f' = 2(x+1)^{-3}
        let f = kernel_atom(2.0);
        for route in Route::ALL {
            assert_relative_eq!(
                c_op(&f, 2.0, 1, 1.0, route).unwrap(),
                0.25,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn c_of_constant_is_rising_factorial() {
        let f = GSFunction::constant(1.5, 1.0).unwrap();
        for route in Route::ALL {
            assert_relative_eq!(
                c_op(&f, 1.5, 2, 0.7, route).unwrap(),
                1.5 * 2.5,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn c_annihilates_power_decay() {
        // f = x^{-lam}: x^{lam-1+k} f = x^{k-1}, whose k-th derivative vanishes
        for lam in [0.5, 1.0, 2.0] {
            let f = GSFunction::power_decay(lam, 1.0).unwrap();
            for k in 1..=4 {
                for route in Route::ALL {
                    let v = c_op(&f, lam, k, 0.8, route).unwrap();
                    assert!(
                        v.abs() < 1e-9,
                        "c_{k} of x^-{lam} should vanish, got {v} via {route:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn routes_agree_on_rational_density() {
        let d = SmoothDensity::rational(vec![1.0], vec![1.0, 0.0, 1.0]).unwrap();
        let f = GSFunction::from_laplace_density(1.0, d, 0.0, f64::INFINITY).unwrap();
        for k in 0..=4 {
            for &x in &[0.1, 1.0, 10.0] {
                let a = c_op(&f, 1.0, k, x, Route::Leibniz).unwrap();
                let b = c_op(&f, 1.0, k, x, Route::KeyIdentity).unwrap();
                let c = c_op(&f, 1.0, k, x, Route::Recursion).unwrap();
                assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()));
                assert!((a - c).abs() <= 1e-8 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn lam_one_key_identity_degenerates_to_single_term() {
        // (0)_{k-j} = 0 except j = k: only (x^k f)^{(k)} survives
        let coeffs = c_coefficients(Route::KeyIdentity, 1.0, 3).unwrap();
        let leib = c_coefficients(Route::Leibniz, 1.0, 3).unwrap();
        for (a, b) in coeffs.iter().zip(&leib) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn t_op_at_exponential_atom() {
        // f = e^{-x} (μ = δ₁, lam = 2): T_{1,1} = (3-x) e^{-x}
        let f = GSFunction::from_laplace_atoms(2.0, &[(1.0, 1.0)]).unwrap();
        assert_relative_eq!(
            t_op(&f, 2.0, 1, 1, 1.0).unwrap(),
            2.0 * (-1.0f64).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn t_at_n_zero_is_c() {
        let f = kernel_atom(1.5);
        for k in 0..=3 {
            for &x in &[0.3, 1.0, 5.0] {
                assert_relative_eq!(
                    t_op(&f, 1.5, 0, k, x).unwrap(),
                    c_op(&f, 1.5, k, x, Route::Leibniz).unwrap(),
                    max_relative = 1e-13
                );
            }
        }
    }

    #[test]
    fn t_of_constant_vanishes_for_positive_n() {
        let f = GSFunction::constant(1.0, 1.0).unwrap();
        for k in 0..=3 {
            assert_eq!(t_op(&f, 1.0, 1, k, 2.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn t_matches_derivative_of_c() {
        let f = GSFunction::from_laplace_atoms(2.0, &[(1.0, 1.0)]).unwrap();
        let r = t_equals_deriv_c_check(&f, 2.0, 1, 1, 1.0, 1e-4).unwrap();
        assert!(r.abs_gap <= 1e-6, "gap {}", r.abs_gap);

        let r0 = t_equals_deriv_c_check(&f, 2.0, 0, 2, 1.0, 1e-4).unwrap();
        assert_eq!(r0.abs_gap, 0.0);

        let g = kernel_atom(2.0);
        let r2 = t_equals_deriv_c_check(&g, 2.0, 2, 1, 2.0, 1e-3).unwrap();
        assert!(r2.abs_gap <= 1e-4, "gap {}", r2.abs_gap);
    }

    #[test]
    fn g_op_examples() {
        let f = kernel_atom(2.0);
        // g_1 = f for any order parameter
        assert_relative_eq!(
            g_op(&f, 2.0, 1, 1.3).unwrap(),
            f.eval(1.3).unwrap(),
            max_relative = 1e-12
        );
        // lam = 1, k = 2 on (x+1)^{-2}: c_1 at order 2 = 2f + xf' = 0.25 at x=1
        assert_relative_eq!(g_op(&f, 1.0, 2, 1.0).unwrap(), 0.25, max_relative = 1e-10);
        assert!(g_op(&f, 1.0, 0, 1.0).is_err());
    }

    #[test]
    fn g_recurrence_from_first_lemma() {
        // g_k = c_{k-1} + (k-1) g_{k-1}
        let f = kernel_atom(1.5);
        let lam = 1.5;
        for k in 2..=4usize {
            for &x in &[0.5, 1.0, 3.0] {
                let lhs = g_op(&f, lam, k, x).unwrap();
                let rhs = c_op(&f, lam, k - 1, x, Route::Leibniz).unwrap()
                    + (k - 1) as f64 * g_op(&f, lam, k - 1, x).unwrap();
                assert!(
                    (lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()),
                    "k={k}, x={x}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn measure_side_matches_function_side() {
        // w = e^{-s}, lam = 1: f = 1/(1+x), c_1 = (1+x)^{-2}
        let f = GSFunction::from_laplace_density(
            1.0,
            SmoothDensity::exponential(1.0, 1.0),
            0.0,
            f64::INFINITY,
        )
        .unwrap();
        let v = c_op_measure_side(&f, 1, 1.0).unwrap();
        assert_relative_eq!(v, 0.25, max_relative = 1e-8);
        let w = c_op(&f, 1.0, 1, 1.0, Route::Leibniz).unwrap();
        assert!((v - w).abs() <= 1e-6 * (1.0 + v.abs()));
    }

    #[test]
    fn measure_side_of_lebesgue_vanishes_at_order_two() {
        // w = 1: second derivative is zero, so the transform is empty
        let f = GSFunction::from_laplace_density(
            1.5,
            SmoothDensity::constant(1.0),
            0.0,
            f64::INFINITY,
        )
        .unwrap();
        let v = c_op_measure_side(&f, 2, 0.7).unwrap();
        assert!(v.abs() < 1e-10, "got {v}");
    }

    #[test]
    fn measure_side_k_zero_is_eval() {
        let f = GSFunction::from_laplace_atoms(2.0, &[(1.0, 1.0)]).unwrap();
        assert_relative_eq!(
            c_op_measure_side(&f, 0, 1.0).unwrap(),
            f.eval(1.0).unwrap(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn measure_side_constant_transforms_exactly() {
        let f = GSFunction::constant(1.5, 3.0).unwrap();
        // no measure present: k >= 1 requires one
        assert!(c_op_measure_side(&f, 1, 1.0).is_err());
        let f = GSFunction::builder(1.5)
            .constant(3.0)
            .laplace_measure(Measure::zero())
            .build()
            .unwrap();
        assert_relative_eq!(
            c_op_measure_side(&f, 2, 1.0).unwrap(),
            3.0 * 1.5 * 2.5,
            max_relative = 1e-12
        );
    }

    #[test]
    fn chu_vandermonde_worked_example() {
        let r = chu_vandermonde_check(1.5, 1, 2, 0).unwrap();
        assert_relative_eq!(r.lhs, 8.75, max_relative = 1e-12);
        assert_relative_eq!(r.rhs, 8.75, max_relative = 1e-12);
        // m = k: single term, all factors unit
        let r = chu_vandermonde_check(2.7, 3, 4, 4).unwrap();
        assert_relative_eq!(r.lhs, 1.0, max_relative = 1e-12);
        assert_relative_eq!(r.rhs, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn chu_vandermonde_lam_one_sweep() {
        for n in 0..=8 {
            for k in 0..=8 {
                for m in 0..=k {
                    let r = chu_vandermonde_check(1.0, n, k, m).unwrap();
                    assert!(r.rel_gap <= 1e-10, "(n={n},k={k},m={m}): {r:?}");
                }
            }
        }
    }

    #[test]
    fn operator_table_has_small_discrepancy() {
        let f = kernel_atom(2.0);
        let grid = ScanGrid::log_spaced(0.1, 10.0, 8).unwrap();
        let table = build_operator_table(&f, 2.0, 1, 3, &grid).unwrap();
        assert!(table.discrepancy <= 1e-10, "{}", table.discrepancy);
        assert!(!table.low_x_warning);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn chu_vandermonde_random_lambda(lam in 0.1f64..5.0, n in 0usize..8, k in 0usize..8) {
            for m in 0..=k {
                let r = chu_vandermonde_check(lam, n, k, m).unwrap();
                prop_assert!(r.rel_gap <= 1e-10, "(lam={lam},n={n},k={k},m={m}): {:?}", r);
            }
        }

        #[test]
        fn coefficient_routes_agree(lam in 0.1f64..4.0, k in 0usize..7) {
            let a = c_coefficients(Route::Leibniz, lam, k).unwrap();
            let b = c_coefficients(Route::KeyIdentity, lam, k).unwrap();
            let c = c_coefficients(Route::Recursion, lam, k).unwrap();
            for j in 0..=k {
                prop_assert!((a[j] - b[j]).abs() <= 1e-10 * (1.0 + a[j].abs()));
                prop_assert!((a[j] - c[j]).abs() <= 1e-10 * (1.0 + a[j].abs()));
            }
        }
    }
}
