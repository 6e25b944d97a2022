//! Cost functions `c(x, y)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::POSITION_TOL;
use crate::transforms::{TransformError, TransformSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("cost {family} undefined at ({x}, {y})")]
    OutOfDomain { family: String, x: f64, y: f64 },
    #[error("tabulated cost: ({x}, {y}) is not a grid point")]
    OffGrid { x: f64, y: f64 },
    #[error("tabulated cost: grid is {rows}x{cols} but {values} values were given")]
    IncompleteGrid { rows: usize, cols: usize, values: usize },
    #[error("tabulated cost: grid axes must be strictly increasing and finite")]
    BadAxis,
    #[error("unknown cost family {0:?}")]
    UnknownFamily(String),
    #[error("cost {0} has no serializable form")]
    NotSerializable(String),
    #[error("invalid cost parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// Closed-form cost families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostFamily {
    /// `−|x − y|`
    AbsDiffNeg,
    /// `|x − y|`
    AbsDiff,
    /// `−x·y²`, with `c_xyy < 0`.
    SmNeg,
    /// `x·y²`
    SmPos,
    /// `(y − x)³`
    Cubic,
    /// `−|y/x − 1|`, defined for `x ≠ 0`.
    NumeraireAbs,
    /// `−|x + y|`
    MirroredAbs,
}

impl CostFamily {
    pub const ALL: [CostFamily; 7] = [
        CostFamily::AbsDiffNeg,
        CostFamily::AbsDiff,
        CostFamily::SmNeg,
        CostFamily::SmPos,
        CostFamily::Cubic,
        CostFamily::NumeraireAbs,
        CostFamily::MirroredAbs,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            CostFamily::AbsDiffNeg => "abs_diff_neg",
            CostFamily::AbsDiff => "abs_diff",
            CostFamily::SmNeg => "sm_neg",
            CostFamily::SmPos => "sm_pos",
            CostFamily::Cubic => "cubic",
            CostFamily::NumeraireAbs => "numeraire_abs",
            CostFamily::MirroredAbs => "mirrored_abs",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.tag() == tag)
    }

    fn eval(self, x: f64, y: f64) -> Option<f64> {
        Some(match self {
            CostFamily::AbsDiffNeg => -(x - y).abs(),
            CostFamily::AbsDiff => (x - y).abs(),
            CostFamily::SmNeg => -x * y * y,
            CostFamily::SmPos => x * y * y,
            CostFamily::Cubic => (y - x).powi(3),
            CostFamily::NumeraireAbs => {
                if x == 0.0 {
                    return None;
                }
                -(y / x - 1.0).abs()
            }
            CostFamily::MirroredAbs => -(x + y).abs(),
        })
    }
}

/// Cost given by its values on a rectangular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedCost {
    pub x_grid: Vec<f64>,
    pub y_grid: Vec<f64>,
    /// Row-major: `values[i][j] = c(x_grid[i], y_grid[j])`.
    pub values: Vec<Vec<f64>>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.iter().all(|a| a.is_finite()) && v.windows(2).all(|w| w[0] < w[1])
}

fn grid_index(grid: &[f64], v: f64) -> Option<usize> {
    let i = grid.partition_point(|&g| g < v - POSITION_TOL);
    (i < grid.len() && (grid[i] - v).abs() <= POSITION_TOL).then_some(i)
}

impl TabulatedCost {
    pub fn new(x_grid: Vec<f64>, y_grid: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, CostError> {
        if !strictly_increasing(&x_grid) || !strictly_increasing(&y_grid) || x_grid.is_empty() || y_grid.is_empty() {
            return Err(CostError::BadAxis);
        }
        let complete = values.len() == x_grid.len()
            && values.iter().all(|r| r.len() == y_grid.len() && r.iter().all(|v| v.is_finite()));
        if !complete {
            return Err(CostError::IncompleteGrid {
                rows: x_grid.len(),
                cols: y_grid.len(),
                values: values.iter().map(Vec::len).sum(),
            });
        }
        Ok(TabulatedCost { x_grid, y_grid, values })
    }

    /// Tabulates `f` on the grid.
    pub fn from_fn(x_grid: Vec<f64>, y_grid: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Result<Self, CostError> {
        let values = x_grid.iter().map(|&x| y_grid.iter().map(|&y| f(x, y)).collect()).collect();
        Self::new(x_grid, y_grid, values)
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64, CostError> {
        match (grid_index(&self.x_grid, x), grid_index(&self.y_grid, y)) {
            (Some(i), Some(j)) => Ok(self.values[i][j]),
            _ => Err(CostError::OffGrid { x, y }),
        }
    }
}

type CostFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// An evaluable cost `c(x, y)`.
#[derive(Clone)]
pub enum CostFunction {
    Family(CostFamily),
    Tabulated(TabulatedCost),
    /// Arbitrary closure; not serializable.
    Custom { name: String, f: Arc<CostFn> },
    /// `c' = (c/h)∘T⁻¹` for a transformation `(T, h)`.
    Transformed { spec: Box<TransformSpec>, inner: Box<CostFunction> },
}

impl fmt::Debug for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CostFunction({})", self.name())
    }
}

impl From<CostFamily> for CostFunction {
    fn from(f: CostFamily) -> Self {
        CostFunction::Family(f)
    }
}

impl CostFunction {
    pub fn custom(name: impl Into<String>, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        CostFunction::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> String {
        match self {
            CostFunction::Family(f) => f.tag().to_string(),
            CostFunction::Tabulated(t) => format!("tabulated[{}x{}]", t.x_grid.len(), t.y_grid.len()),
            CostFunction::Custom { name, .. } => name.clone(),
            CostFunction::Transformed { spec, inner } => format!("{}∘{}", inner.name(), spec.name()),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64, CostError> {
        match self {
            CostFunction::Family(f) => f.eval(x, y).ok_or_else(|| CostError::OutOfDomain {
                family: f.tag().to_string(),
                x,
                y,
            }),
            CostFunction::Tabulated(t) => t.eval(x, y),
            CostFunction::Custom { f, .. } => Ok(f(x, y)),
            CostFunction::Transformed { spec, inner } => {
                let (u, v) = spec.inverse(x, y)?;
                let h = spec.weight(u, v)?;
                Ok(inner.eval(u, v)? / h)
            }
        }
    }

    /// `∫ c dπ` over the entries of a coupling.
    pub fn integrate(&self, pi: &crate::Coupling) -> Result<f64, CostError> {
        pi.entries()
            .iter()
            .map(|&(x, y, m)| self.eval(x, y).map(|c| c * m))
            .sum()
    }

    pub fn to_spec(&self) -> Result<CostSpec, CostError> {
        match self {
            CostFunction::Family(f) => Ok(CostSpec {
                family: f.tag().to_string(),
                params: serde_json::Value::Object(Default::default()),
            }),
            CostFunction::Tabulated(t) => Ok(CostSpec {
                family: "tabulated".into(),
                params: serde_json::to_value(t).map_err(|e| CostError::BadParams(e.to_string()))?,
            }),
            other => Err(CostError::NotSerializable(other.name())),
        }
    }
}

/// Serialized cost: `{"family": tag, "params": {...}}`.
///
/// Tabulated costs carry `x_grid`, `y_grid` and row-major `values` in `params`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub family: String,
    #[serde(default = "empty_object")]
    pub params: serde_json::Value,
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

impl TryFrom<CostSpec> for CostFunction {
    type Error = CostError;

    fn try_from(spec: CostSpec) -> Result<Self, Self::Error> {
        if spec.family == "tabulated" {
            let t: TabulatedCost =
                serde_json::from_value(spec.params).map_err(|e| CostError::BadParams(e.to_string()))?;
            return TabulatedCost::new(t.x_grid, t.y_grid, t.values).map(CostFunction::Tabulated);
        }
        CostFamily::from_tag(&spec.family)
            .map(CostFunction::Family)
            .ok_or(CostError::UnknownFamily(spec.family))
    }
}

impl Serialize for CostFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_spec().map_err(serde::ser::Error::custom)?.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CostFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        CostSpec::deserialize(d)?.try_into().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families() {
        let c = |f: CostFamily, x, y| CostFunction::Family(f).eval(x, y).unwrap();
        assert_eq!(c(CostFamily::AbsDiffNeg, 1.0, 3.0), -2.0);
        assert_eq!(c(CostFamily::AbsDiff, 1.0, 3.0), 2.0);
        assert_eq!(c(CostFamily::SmNeg, 2.0, 3.0), -18.0);
        assert_eq!(c(CostFamily::SmPos, 2.0, 3.0), 18.0);
        assert_eq!(c(CostFamily::Cubic, 1.0, 3.0), 8.0);
        assert_eq!(c(CostFamily::NumeraireAbs, 2.0, 3.0), -0.5);
        assert_eq!(c(CostFamily::MirroredAbs, -1.0, 3.0), -2.0);
        assert!(CostFunction::Family(CostFamily::NumeraireAbs).eval(0.0, 1.0).is_err());
    }

    #[test]
    fn tabulated_lookup() {
        let t = TabulatedCost::from_fn(vec![0.0, 1.0], vec![-1.0, 0.0, 1.0], |x, y| x * y * y).unwrap();
        let c = CostFunction::Tabulated(t);
        assert_eq!(c.eval(1.0, -1.0).unwrap(), 1.0);
        assert!(matches!(c.eval(0.5, 0.0), Err(CostError::OffGrid { .. })));
    }

    #[test]
    fn tabulated_rejects_ragged() {
        let err = TabulatedCost::new(vec![0.0, 1.0], vec![0.0], vec![vec![1.0]]).unwrap_err();
        assert!(matches!(err, CostError::IncompleteGrid { .. }));
        assert!(TabulatedCost::new(vec![1.0, 0.0], vec![0.0], vec![vec![1.0], vec![1.0]]).is_err());
    }

    #[test]
    fn json_round_trip() {
        for f in CostFamily::ALL {
            let c = CostFunction::Family(f);
            let s = serde_json::to_string(&c).unwrap();
            assert_eq!(s, format!("{{\"family\":\"{}\",\"params\":{{}}}}", f.tag()));
            let back: CostFunction = serde_json::from_str(&s).unwrap();
            assert_eq!(back.name(), f.tag());
        }
        let t = TabulatedCost::from_fn(vec![0.0, 1.0], vec![0.0, 2.0], |x, y| x + y).unwrap();
        let s = serde_json::to_string(&CostFunction::Tabulated(t.clone())).unwrap();
        match serde_json::from_str::<CostFunction>(&s).unwrap() {
            CostFunction::Tabulated(u) => assert_eq!(u, t),
            other => panic!("{other:?}"),
        }
        assert!(serde_json::from_str::<CostFunction>(r#"{"family":"nope"}"#).is_err());
        assert!(serde_json::to_string(&CostFunction::custom("f", |x, _| x)).is_err());
    }
}
