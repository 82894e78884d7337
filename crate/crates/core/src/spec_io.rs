//! The JSON spec format: one schema for measures, embedded by the function
//! spec. Field-level diagnostics on validation failure, defaults filled on
//! normalization.
//!
//! ```json
//! {
//!   "lambda": 1.0, "c": 0.0, "zero_atom": 0.0, "side": "laplace",
//!   "measure": {
//!     "atoms": [{"s": 1.0, "w": 1.0}],
//!     "density": [{"interval": [0, null], "family": "exp",
//!                  "params": {"rate": 1.0}, "max_order": 8}]
//!   }
//! }
//! ```
//!
//! `interval` upper bound `null` means +∞. Families `exp`, `powerlaw` and
//! `rational` carry closed-form derivatives; `expr` parses an expression of
//! `s` and differentiates by central differences (order capped at 6).

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::expr;
use crate::funcspace::{ClosedForm, GSFunction};
use crate::measure::{Measure, ScanGrid, SmoothDensity, FD_ORDER_CAP};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtomSpec {
    pub s: f64,
    pub w: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityPieceSpec {
    pub interval: (f64, Option<f64>),
    pub family: String,
    #[serde(default)]
    pub params: serde_json::Map<String, Value>,
    #[serde(default)]
    pub max_order: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MeasureSpec {
    #[serde(default)]
    pub atoms: Vec<AtomSpec>,
    #[serde(default)]
    pub density: Vec<DensityPieceSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClosedFormSpec {
    Constant { value: f64 },
    PowerKernel { t: f64, weight: f64 },
    ExpKernel { s: f64, weight: f64 },
    Combination { terms: Vec<ClosedFormSpec> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(default = "default_grid_min")]
    pub min: f64,
    #[serde(default = "default_grid_max")]
    pub max: f64,
    #[serde(default = "default_grid_points")]
    pub points: usize,
    #[serde(default = "default_grid_scale")]
    pub scale: String,
}

fn default_grid_min() -> f64 {
    1e-3
}
fn default_grid_max() -> f64 {
    1e3
}
fn default_grid_points() -> usize {
    64
}
fn default_grid_scale() -> String {
    "log".to_string()
}
fn default_side() -> String {
    "laplace".to_string()
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            min: default_grid_min(),
            max: default_grid_max(),
            points: default_grid_points(),
            scale: default_grid_scale(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub lambda: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub zero_atom: f64,
    #[serde(default = "default_side")]
    pub side: String,
    #[serde(default)]
    pub measure: Option<MeasureSpec>,
    #[serde(default)]
    pub closed_form: Option<ClosedFormSpec>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

fn param_f64(
    params: &serde_json::Map<String, Value>,
    key: &str,
    context: &str,
) -> Result<Option<f64>> {
    match params.get(key) {
        None => Ok(None),
        Some(v) => v.as_f64().map(Some).ok_or_else(|| {
            Error::InvalidSpec(format!("{context}.params.{key} must be a number"))
        }),
    }
}

fn param_vec(
    params: &serde_json::Map<String, Value>,
    key: &str,
    context: &str,
) -> Result<Option<Vec<f64>>> {
    match params.get(key) {
        None => Ok(None),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_f64().ok_or_else(|| {
                    Error::InvalidSpec(format!(
                        "{context}.params.{key} must contain only numbers"
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()
            .map(Some),
        Some(_) => Err(Error::InvalidSpec(format!(
            "{context}.params.{key} must be an array of numbers"
        ))),
    }
}

pub fn density_from_spec(spec: &DensityPieceSpec, index: usize) -> Result<SmoothDensity> {
    let ctx = format!("density[{index}]");
    match spec.family.as_str() {
        "exp" => {
            let scale = param_f64(&spec.params, "scale", &ctx)?.unwrap_or(1.0);
            let rate = param_f64(&spec.params, "rate", &ctx)?.unwrap_or(1.0);
            Ok(SmoothDensity::exponential(scale, rate))
        }
        "powerlaw" => {
            let scale = param_f64(&spec.params, "scale", &ctx)?.unwrap_or(1.0);
            let exponent = param_f64(&spec.params, "exponent", &ctx)?.ok_or_else(|| {
                Error::InvalidSpec(format!("{ctx}.params.exponent is required for powerlaw"))
            })?;
            Ok(SmoothDensity::power(scale, exponent))
        }
        "rational" => {
            let num = param_vec(&spec.params, "num", &ctx)?.ok_or_else(|| {
                Error::InvalidSpec(format!("{ctx}.params.num is required for rational"))
            })?;
            let den = param_vec(&spec.params, "den", &ctx)?.ok_or_else(|| {
                Error::InvalidSpec(format!("{ctx}.params.den is required for rational"))
            })?;
            SmoothDensity::rational(num, den)
                .map_err(|e| Error::InvalidSpec(format!("{ctx}: {e}")))
        }
        "expr" => {
            let text = spec
                .params
                .get("expr")
                .and_then(|v| v.as_str())
                .ok_or_else(|| {
                    Error::InvalidSpec(format!("{ctx}.params.expr (a string) is required"))
                })?;
            let parsed = expr::parse(text).map_err(|e| Error::InvalidSpec(format!("{ctx}: {e}")))?;
            let order = spec.max_order.unwrap_or(4);
            if order > FD_ORDER_CAP {
                return Err(Error::InvalidSpec(format!(
                    "{ctx}.max_order is capped at {FD_ORDER_CAP} for expr densities, got {order}"
                )));
            }
            Ok(SmoothDensity::from_expr(parsed, order))
        }
        other => Err(Error::InvalidSpec(format!(
            "{ctx}.family must be one of exp|powerlaw|rational|expr, got `{other}`"
        ))),
    }
}

pub fn measure_from_spec(spec: &MeasureSpec) -> Result<Measure> {
    let mut atoms = Vec::with_capacity(spec.atoms.len());
    for (i, a) in spec.atoms.iter().enumerate() {
        if !(a.s > 0.0) || !a.s.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "atoms[{i}].s must be positive, got {}",
                a.s
            )));
        }
        if !(a.w >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "atoms[{i}].w must be non-negative, got {}",
                a.w
            )));
        }
        atoms.push((a.s, a.w));
    }
    let mut pieces = Vec::with_capacity(spec.density.len());
    for (i, d) in spec.density.iter().enumerate() {
        let lower = d.interval.0;
        let upper = d.interval.1.unwrap_or(f64::INFINITY);
        if !(lower >= 0.0) || !lower.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "density[{i}].interval lower bound must be a finite number >= 0, got {lower}"
            )));
        }
        if !(upper > lower) {
            return Err(Error::InvalidSpec(format!(
                "density[{i}].interval must have upper > lower, got ({lower}, {upper})"
            )));
        }
        let density = density_from_spec(d, i)?;
        pieces.push(crate::measure::DensityPiece {
            lower,
            upper,
            density,
        });
    }
    let m = Measure::new(
        atoms
            .into_iter()
            .map(|(location, weight)| crate::measure::Atom { location, weight })
            .collect(),
        pieces,
    )
    .map_err(|e| Error::InvalidSpec(e.to_string()))?;
    Ok(m)
}

fn closed_form_from_spec(spec: &ClosedFormSpec) -> ClosedForm {
    match spec {
        ClosedFormSpec::Constant { value } => ClosedForm::Constant { value: *value },
        ClosedFormSpec::PowerKernel { t, weight } => ClosedForm::PowerKernel {
            t: *t,
            weight: *weight,
        },
        ClosedFormSpec::ExpKernel { s, weight } => ClosedForm::ExpKernel {
            s: *s,
            weight: *weight,
        },
        ClosedFormSpec::Combination { terms } => {
            ClosedForm::Combination(terms.iter().map(closed_form_from_spec).collect())
        }
    }
}

pub fn grid_from_spec(spec: &GridSpec, tolerance: Option<f64>) -> Result<ScanGrid> {
    let grid = match spec.scale.as_str() {
        "log" => ScanGrid::log_spaced(spec.min, spec.max, spec.points),
        "linear" => ScanGrid::linear(spec.min, spec.max, spec.points),
        other => Err(Error::InvalidSpec(format!(
            "grid.scale must be `log` or `linear`, got `{other}`"
        ))),
    }
    .map_err(|e| Error::InvalidSpec(format!("grid: {e}")))?;
    Ok(grid.with_tolerance(tolerance.unwrap_or(1e-9)))
}

/// Build the function object; measure densities are spot-checked for
/// non-negativity on the spec's grid.
pub fn function_from_spec(spec: &FunctionSpec) -> Result<GSFunction> {
    if !(spec.lambda > 0.0) || !spec.lambda.is_finite() {
        return Err(Error::InvalidSpec(format!(
            "lambda must be positive, got {}",
            spec.lambda
        )));
    }
    if !matches!(spec.side.as_str(), "laplace" | "stieltjes") {
        return Err(Error::InvalidSpec(format!(
            "side must be `laplace` or `stieltjes`, got `{}`",
            spec.side
        )));
    }
    let grid = grid_from_spec(&spec.grid.clone().unwrap_or_default(), spec.tolerance)?;
    let mut builder = GSFunction::builder(spec.lambda)
        .constant(spec.c)
        .zero_atom(spec.zero_atom);
    if let Some(mspec) = &spec.measure {
        let measure = measure_from_spec(mspec)?;
        measure
            .check_nonnegative(&grid)
            .map_err(|e| Error::InvalidSpec(e.to_string()))?;
        builder = match spec.side.as_str() {
            "laplace" => builder.laplace_measure(measure),
            _ => builder.stieltjes_measure(measure),
        };
    }
    if let Some(cf) = &spec.closed_form {
        builder = builder.closed_form(closed_form_from_spec(cf));
    }
    builder
        .build()
        .map_err(|e| Error::InvalidSpec(e.to_string()))
}

/// Parse a spec document; serde errors carry line/column diagnostics.
pub fn parse_function_spec(text: &str) -> Result<FunctionSpec> {
    serde_json::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))
}

/// The spec with defaults materialized, for reproducible report embedding.
pub fn normalize(spec: &FunctionSpec) -> FunctionSpec {
    let mut out = spec.clone();
    if out.grid.is_none() {
        out.grid = Some(GridSpec::default());
    }
    if out.tolerance.is_none() {
        out.tolerance = Some(1e-9);
    }
    if out.measure.is_none() && out.closed_form.is_none() {
        out.measure = Some(MeasureSpec::default());
    }
    out
}

pub fn normalized_json(spec: &FunctionSpec) -> Value {
    serde_json::to_value(normalize(spec)).unwrap_or(Value::Null)
}
