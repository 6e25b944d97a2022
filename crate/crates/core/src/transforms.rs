//! `(T, h)` transformations: a bijection `T = (s, t)` of a rectangle `I×J` and a
//! positive weight `h`.
//!
//! A coupling `π` maps to `τ(π)` with `∫ g dτ(π) = ∫ g∘T · h dπ`, and a cost `c`
//! maps to `c' = (c/h)∘T⁻¹`, so that `∫ c' dτ(π) = ∫ c dπ`.

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CostFunction, TabulatedCost};
use crate::measures::{Coupling, MeasureError, SupportSet, POSITION_TOL};
use crate::monotone::{canonical_pair, min_over_competitors, verify_c123, C123Verdict};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("({x}, {y}) lies outside the domain of {name}")]
    OutsideDomain { name: String, x: f64, y: f64 },
    #[error("({x}, {y}) is not in the image of {name}")]
    OutsideImage { name: String, x: f64, y: f64 },
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("custom inverse fails to invert at ({x}, {y}): error {error}")]
    BadInverse { x: f64, y: f64, error: f64 },
    #[error("weight h is not positive at ({x}, {y})")]
    NonPositiveWeight { x: f64, y: f64 },
    #[error("operation needs a {0} transform")]
    WrongVariant(&'static str),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("competitor search failed: {0}")]
    Competitor(String),
}

/// Closed interval; infinite ends allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(with = "opt_inf")]
    pub lo: f64,
    #[serde(with = "opt_inf")]
    pub hi: f64,
}

/// Infinite ends serialize as `null`.
mod opt_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl Interval {
    pub const REAL: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo - POSITION_TOL && v <= self.hi + POSITION_TOL
    }

    fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x: Interval,
    pub y: Interval,
}

impl Domain {
    pub const PLANE: Domain = Domain {
        x: Interval::REAL,
        y: Interval::REAL,
    };

    pub fn rect(x: (f64, f64), y: (f64, f64)) -> Self {
        Domain {
            x: Interval::new(x.0, x.1),
            y: Interval::new(y.0, y.1),
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.x.contains(x) && self.y.contains(y)
    }
}

type Map2 = dyn Fn(f64, f64) -> f64 + Send + Sync;
type Inv2 = dyn Fn(f64, f64) -> (f64, f64) + Send + Sync;

/// User-supplied maps; only constructible in code.
#[derive(Clone)]
pub struct CustomMaps {
    pub name: String,
    pub s: Arc<Map2>,
    pub t: Arc<Map2>,
    pub h: Arc<Map2>,
    pub inverse: Arc<Inv2>,
}

impl fmt::Debug for CustomMaps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomMaps({})", self.name)
    }
}

#[derive(Debug, Clone)]
pub enum TransformVariant {
    /// `T(x,y) = (ax+b, ay+b)`, `h ≡ 1`.
    Affine { a: f64, b: f64 },
    /// `T(x,y) = (a/(x−b), a/(y−b))`, `h(y) = c(y−b)`.
    Numeraire { a: f64, b: f64, c: f64 },
    /// Coordinate negations, `h ≡ 1`.
    Mirror { flip_x: bool, flip_y: bool },
    Custom(CustomMaps),
}

#[derive(Debug, Clone)]
pub struct TransformSpec {
    pub variant: TransformVariant,
    pub domain: Domain,
}

/// Distance from the numeraire pole below which points are rejected.
const POLE_MARGIN: f64 = 1e-9;

impl TransformSpec {
    pub fn affine(a: f64, b: f64) -> Result<Self, TransformError> {
        if a == 0.0 || !a.is_finite() || !b.is_finite() {
            return Err(TransformError::BadParams(format!("affine needs finite a ≠ 0, got a={a}, b={b}")));
        }
        Ok(TransformSpec {
            variant: TransformVariant::Affine { a, b },
            domain: Domain::PLANE,
        })
    }

    /// Numeraire change on `(b, ∞)²`.
    pub fn numeraire(a: f64, b: f64, c: f64) -> Result<Self, TransformError> {
        if !(a > 0.0 && c > 0.0 && b.is_finite() && a.is_finite() && c.is_finite()) {
            return Err(TransformError::BadParams(format!(
                "numeraire needs a > 0, c > 0, finite b; got a={a}, b={b}, c={c}"
            )));
        }
        let half = Interval::new(b, f64::INFINITY);
        Ok(TransformSpec {
            variant: TransformVariant::Numeraire { a, b, c },
            domain: Domain { x: half, y: half },
        })
    }

    pub fn mirror(flip_x: bool, flip_y: bool) -> Self {
        TransformSpec {
            variant: TransformVariant::Mirror { flip_x, flip_y },
            domain: Domain::PLANE,
        }
    }

    /// Builds a custom transform on a bounded rectangle, checking on a sample
    /// grid that `inverse ∘ T` is the identity within 1e-9 and that `h > 0`.
    pub fn custom(maps: CustomMaps, domain: Domain) -> Result<Self, TransformError> {
        if !(domain.x.is_bounded() && domain.y.is_bounded()) || domain.x.lo > domain.x.hi || domain.y.lo > domain.y.hi {
            return Err(TransformError::BadParams("custom transforms need a bounded rectangle".into()));
        }
        let n = 7;
        for i in 0..n {
            for j in 0..n {
                let x = domain.x.lo + (domain.x.hi - domain.x.lo) * i as f64 / (n - 1) as f64;
                let y = domain.y.lo + (domain.y.hi - domain.y.lo) * j as f64 / (n - 1) as f64;
                let (u, v) = ((maps.s)(x, y), (maps.t)(x, y));
                let (p, q) = (maps.inverse)(u, v);
                let error = (p - x).abs().max((q - y).abs());
                if !(error <= 1e-9) {
                    return Err(TransformError::BadInverse { x, y, error });
                }
                if !((maps.h)(x, y) > 0.0) {
                    return Err(TransformError::NonPositiveWeight { x, y });
                }
            }
        }
        Ok(TransformSpec {
            variant: TransformVariant::Custom(maps),
            domain,
        })
    }

    /// Restricts the domain to a sub-rectangle.
    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn name(&self) -> String {
        match &self.variant {
            TransformVariant::Affine { a, b } => format!("affine(a={a}, b={b})"),
            TransformVariant::Numeraire { a, b, c } => format!("numeraire(a={a}, b={b}, c={c})"),
            TransformVariant::Mirror { flip_x, flip_y } => format!("mirror(flip_x={flip_x}, flip_y={flip_y})"),
            TransformVariant::Custom(m) => m.name.clone(),
        }
    }

    fn check_domain(&self, x: f64, y: f64) -> Result<(), TransformError> {
        let pole_ok = match self.variant {
            TransformVariant::Numeraire { b, .. } => x > b + POLE_MARGIN && y > b + POLE_MARGIN,
            _ => true,
        };
        if pole_ok && self.domain.contains(x, y) && x.is_finite() && y.is_finite() {
            Ok(())
        } else {
            Err(TransformError::OutsideDomain { name: self.name(), x, y })
        }
    }

    /// `T(x, y)`.
    pub fn forward(&self, x: f64, y: f64) -> Result<(f64, f64), TransformError> {
        self.check_domain(x, y)?;
        Ok(self.forward_unchecked(x, y))
    }

    fn forward_unchecked(&self, x: f64, y: f64) -> (f64, f64) {
        match &self.variant {
            TransformVariant::Affine { a, b } => (a * x + b, a * y + b),
            TransformVariant::Numeraire { a, b, .. } => (a / (x - b), a / (y - b)),
            TransformVariant::Mirror { flip_x, flip_y } => {
                (if *flip_x { -x } else { x }, if *flip_y { -y } else { y })
            }
            TransformVariant::Custom(m) => ((m.s)(x, y), (m.t)(x, y)),
        }
    }

    /// `T⁻¹(x', y')`, rejecting points whose preimage leaves the domain.
    pub fn inverse(&self, xp: f64, yp: f64) -> Result<(f64, f64), TransformError> {
        let (x, y) = match &self.variant {
            TransformVariant::Affine { a, b } => ((xp - b) / a, (yp - b) / a),
            TransformVariant::Numeraire { a, b, .. } => (b + a / xp, b + a / yp),
            TransformVariant::Mirror { .. } => self.forward_unchecked(xp, yp),
            TransformVariant::Custom(m) => (m.inverse)(xp, yp),
        };
        if self.check_domain(x, y).is_err() {
            return Err(TransformError::OutsideImage {
                name: self.name(),
                x: xp,
                y: yp,
            });
        }
        Ok((x, y))
    }

    /// `h(x, y)`.
    pub fn weight(&self, x: f64, y: f64) -> Result<f64, TransformError> {
        self.check_domain(x, y)?;
        let h = match &self.variant {
            TransformVariant::Affine { .. } | TransformVariant::Mirror { .. } => 1.0,
            TransformVariant::Numeraire { b, c, .. } => c * (y - b),
            TransformVariant::Custom(m) => (m.h)(x, y),
        };
        if h > 0.0 {
            Ok(h)
        } else {
            Err(TransformError::NonPositiveWeight { x, y })
        }
    }
}

/// Transform JSON: `{"variant": "affine"|"numeraire"|"mirror", "params": {...}}`
/// with an optional `"domain"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRepr {
    pub variant: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
}

impl TryFrom<TransformRepr> for TransformSpec {
    type Error = TransformError;

    fn try_from(r: TransformRepr) -> Result<Self, Self::Error> {
        let num = |k: &str| -> Result<f64, TransformError> {
            r.params
                .get(k)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| TransformError::BadParams(format!("missing numeric parameter {k:?}")))
        };
        let flag = |k: &str| r.params.get(k).and_then(|v| v.as_bool()).unwrap_or(false);
        let spec = match r.variant.as_str() {
            "affine" => TransformSpec::affine(num("a")?, num("b")?)?,
            "numeraire" => TransformSpec::numeraire(num("a")?, num("b")?, num("c")?)?,
            "mirror" => TransformSpec::mirror(flag("flip_x"), flag("flip_y")),
            other => return Err(TransformError::BadParams(format!("unknown transform variant {other:?}"))),
        };
        Ok(match r.domain {
            Some(mut d) => {
                for end in [&mut d.x.lo, &mut d.y.lo] {
                    if end.is_nan() {
                        *end = f64::NEG_INFINITY;
                    }
                }
                for end in [&mut d.x.hi, &mut d.y.hi] {
                    if end.is_nan() {
                        *end = f64::INFINITY;
                    }
                }
                spec.with_domain(d)
            }
            None => spec,
        })
    }
}

impl TryFrom<&TransformSpec> for TransformRepr {
    type Error = TransformError;

    fn try_from(s: &TransformSpec) -> Result<Self, Self::Error> {
        let mut params = serde_json::Map::new();
        let variant = match s.variant {
            TransformVariant::Affine { a, b } => {
                params.insert("a".into(), a.into());
                params.insert("b".into(), b.into());
                "affine"
            }
            TransformVariant::Numeraire { a, b, c } => {
                params.insert("a".into(), a.into());
                params.insert("b".into(), b.into());
                params.insert("c".into(), c.into());
                "numeraire"
            }
            TransformVariant::Mirror { flip_x, flip_y } => {
                params.insert("flip_x".into(), flip_x.into());
                params.insert("flip_y".into(), flip_y.into());
                "mirror"
            }
            TransformVariant::Custom(_) => return Err(TransformError::WrongVariant("non-custom")),
        };
        Ok(TransformRepr {
            variant: variant.into(),
            params,
            domain: Some(s.domain),
        })
    }
}

impl Serialize for TransformSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        TransformRepr::try_from(self).map_err(serde::ser::Error::custom)?.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TransformSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        TransformRepr::deserialize(d)?.try_into().map_err(serde::de::Error::custom)
    }
}

/// `τ(π)`: atom `(x, y, m)` goes to `(T(x, y), m·h(x, y))`.
pub fn transform_measure(spec: &TransformSpec, pi: &Coupling) -> Result<Coupling, TransformError> {
    let entries = pi
        .entries()
        .iter()
        .map(|&(x, y, m)| {
            let (u, v) = spec.forward(x, y)?;
            Ok((u, v, m * spec.weight(x, y)?))
        })
        .collect::<Result<Vec<_>, TransformError>>()?;
    Ok(Coupling::new(entries)?)
}

/// `τ⁻¹(π')`: atom `(x', y', m)` goes to `(T⁻¹(x', y'), m / h(T⁻¹(x', y')))`.
pub fn inverse_transform_measure(spec: &TransformSpec, pi_prime: &Coupling) -> Result<Coupling, TransformError> {
    let entries = pi_prime
        .entries()
        .iter()
        .map(|&(u, v, m)| {
            let (x, y) = spec.inverse(u, v)?;
            Ok((x, y, m / spec.weight(x, y)?))
        })
        .collect::<Result<Vec<_>, TransformError>>()?;
    Ok(Coupling::new(entries)?)
}

/// `c' = (c/h)∘T⁻¹`.
pub fn transform_cost(spec: &TransformSpec, cost: &CostFunction) -> CostFunction {
    CostFunction::Transformed {
        spec: Box::new(spec.clone()),
        inner: Box::new(cost.clone()),
    }
}

pub fn transform_support(spec: &TransformSpec, xi: &SupportSet) -> Result<SupportSet, TransformError> {
    let pts = xi
        .points()
        .iter()
        .map(|&(x, y)| spec.forward(x, y))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SupportSet::new(pts))
}

/// A pair of image-side competitors whose pullbacks fail (C1)–(C3).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreservationCounterexample {
    pub alpha_prime: Coupling,
    pub beta_prime: Coupling,
    pub alpha: Coupling,
    pub beta: Coupling,
    pub check: C123Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreservationVerdict {
    pub preserving: bool,
    pub canonical_pairs: usize,
    pub random_pairs: usize,
    /// Largest (C1), (C2), (C3) residuals over the tested pairs.
    pub max_residuals: [f64; 3],
    pub counterexample: Option<PreservationCounterexample>,
}

fn canonical_image_pairs<'a>(xg: &'a [f64], yg: &'a [f64]) -> impl Iterator<Item = (f64, f64, f64, f64, f64)> + 'a {
    let nx = xg.len();
    let ny = yg.len();
    (0..nx).flat_map(move |i| {
        (0..nx).filter(move |&j| j != i).flat_map(move |j| {
            (0..ny).flat_map(move |a| {
                (a + 1..ny).flat_map(move |m| (m + 1..ny).map(move |b| (xg[i], xg[j], yg[a], yg[m], yg[b])))
            })
        })
    })
}

/// Samples competitor pairs on the image grids, pulls them back and checks
/// (C1)–(C3). The first half of the budget scans canonical three-point pairs
/// in lexicographic order; the rest are random polytope points, optimal
/// competitors for random objectives, with per-trial seeds. Pairs whose
/// pullback leaves the domain are skipped.
pub fn is_competitor_preserving(
    spec: &TransformSpec,
    x_grid: &[f64],
    y_grid: &[f64],
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<PreservationVerdict, TransformError> {
    let mut verdict = PreservationVerdict {
        preserving: true,
        canonical_pairs: 0,
        random_pairs: 0,
        max_residuals: [0.0; 3],
        counterexample: None,
    };
    let test = |verdict: &mut PreservationVerdict, a: Coupling, b: Coupling| -> Result<bool, TransformError> {
        let (pa, pb) = match (inverse_transform_measure(spec, &a), inverse_transform_measure(spec, &b)) {
            (Ok(pa), Ok(pb)) => (pa, pb),
            _ => return Ok(false),
        };
        let check = verify_c123(&pa, &pb, tol);
        for k in 0..3 {
            verdict.max_residuals[k] = verdict.max_residuals[k].max(check.residuals[k]);
        }
        if !check.holds && verdict.counterexample.is_none() {
            verdict.preserving = false;
            verdict.counterexample = Some(PreservationCounterexample {
                alpha_prime: a,
                beta_prime: b,
                alpha: pa,
                beta: pb,
                check,
            });
        }
        Ok(true)
    };
    let canonical_budget = trials.div_ceil(2);
    for (x1, x2, y1, yl, y2) in canonical_image_pairs(x_grid, y_grid) {
        if verdict.canonical_pairs >= canonical_budget || !verdict.preserving {
            break;
        }
        let (a, b) = canonical_pair(x1, x2, y1, yl, y2);
        if test(&mut verdict, a, b)? {
            verdict.canonical_pairs += 1;
        }
    }
    let grid: Vec<(f64, f64)> = x_grid.iter().flat_map(|&x| y_grid.iter().map(move |&y| (x, y))).collect();
    let random_budget = trials - verdict.canonical_pairs.min(trials);
    let mut attempt = 0u64;
    while verdict.preserving && verdict.random_pairs < random_budget && attempt < 4 * random_budget as u64 + 16 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        attempt += 1;
        let size = rng.gen_range(3..=6).min(grid.len());
        let pts: Vec<(f64, f64)> = grid.choose_multiple(&mut rng, size).copied().collect();
        let alpha = Coupling::new(pts.iter().map(|&(x, y)| (x, y, rng.gen_range(0.1..1.0))).collect())?;
        let xs: Vec<f64> = alpha.marginals().0.positions().collect();
        let ys: Vec<f64> = alpha.marginals().1.positions().collect();
        let objective = TabulatedCost::from_fn(xs.clone(), ys.clone(), |_, _| 0.0)
            .and_then(|t| {
                let values = xs.iter().map(|_| ys.iter().map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
                TabulatedCost::new(t.x_grid, t.y_grid, values)
            })
            .map_err(|e| TransformError::Competitor(e.to_string()))?;
        let (_, beta) = min_over_competitors(&alpha, &CostFunction::Tabulated(objective))
            .map_err(|e| TransformError::Competitor(e.to_string()))?;
        if test(&mut verdict, alpha, beta)? {
            verdict.random_pairs += 1;
        }
    }
    Ok(verdict)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingalePreservation {
    pub preserves: bool,
    /// `x` at which `ρ(x, ·)` is not constant.
    pub witness: Option<f64>,
    /// `ρ(x, y) = (t − s)·h/(y − x)` at the first two y-samples of the witness column.
    pub ratios: Option<(f64, f64)>,
}

/// Checks that `ρ(x, y) = (t(x,y) − s(x,y))·h(x,y)/(y − x)` is constant in `y`
/// for every sampled `x`.
pub fn preserves_martingale(
    spec: &TransformSpec,
    x_samples: &[f64],
    y_samples: &[f64],
    tol: f64,
) -> Result<MartingalePreservation, TransformError> {
    for &x in x_samples {
        let mut first: Option<f64> = None;
        for &y in y_samples {
            if (y - x).abs() <= 1e-9 {
                continue;
            }
            let (s, t) = spec.forward(x, y)?;
            let rho = (t - s) * spec.weight(x, y)? / (y - x);
            match first {
                None => first = Some(rho),
                Some(r0) if (rho - r0).abs() > tol * (1.0 + r0.abs()) => {
                    return Ok(MartingalePreservation {
                        preserves: false,
                        witness: Some(x),
                        ratios: Some((r0, rho)),
                    })
                }
                _ => {}
            }
        }
    }
    Ok(MartingalePreservation {
        preserves: true,
        witness: None,
        ratios: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumeraireMass {
    pub total_mass: f64,
    pub is_probability: bool,
    /// Whether `1/c + b` equals the mean of the first marginal within 1e-9.
    pub mean_condition: bool,
}

/// Total mass of the numeraire image of a probability coupling.
pub fn numeraire_mass_check(pi: &Coupling, spec: &TransformSpec) -> Result<NumeraireMass, TransformError> {
    let TransformVariant::Numeraire { b, c, .. } = spec.variant else {
        return Err(TransformError::WrongVariant("numeraire"));
    };
    let image = transform_measure(spec, pi)?;
    let total_mass = image.total_mass();
    let mean = pi.marginals().0.barycenter()?;
    Ok(NumeraireMass {
        total_mass,
        is_probability: (total_mass - 1.0).abs() <= 1e-9,
        mean_condition: (1.0 / c + b - mean).abs() <= 1e-9,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    AffineCase,
    NumeraireCase,
    NotPreserving,
}

/// A point pair showing that a map depends on a variable it must not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceWitness {
    pub map: String,
    pub at: (f64, f64),
    pub versus: (f64, f64),
    pub values: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub case: Case,
    /// Affine: `a`, `b` with `t(y) = a·y + b`. Numeraire: `a`, `b`, `c`, `e` with
    /// `h(y) = c(y − b)` and `t(y) = a/(y − b) + e`.
    pub params: Vec<(String, f64)>,
    pub dependence: Option<DependenceWitness>,
    pub counterexample: Option<PreservationCounterexample>,
    pub preservation: Option<PreservationVerdict>,
}

impl Classification {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.0 == name).map(|p| p.1)
    }
}

const FIT_TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= FIT_TOL * (1.0 + a.abs().max(b.abs()))
}

/// Least-squares line through `(u, v)` pairs; returns slope, intercept and the
/// largest residual.
fn fit_line(u: &[f64], v: &[f64]) -> (f64, f64, f64) {
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let suu: f64 = u.iter().map(|a| (a - mu) * (a - mu)).sum();
    let suv: f64 = u.iter().zip(v).map(|(a, b)| (a - mu) * (b - mv)).sum();
    let slope = if suu > 0.0 { suv / suu } else { 0.0 };
    let icpt = mv - slope * mu;
    let worst = u
        .iter()
        .zip(v)
        .map(|(a, b)| (slope * a + icpt - b).abs() / (1.0 + b.abs()))
        .fold(0.0, f64::max);
    (slope, icpt, worst)
}

/// Numerically classifies a black-box `(T, h)` on the grid `x_grid × y_grid`.
///
/// Steps: dependence tests (`s` on `y`, `t` and `h` on `x`), a constant or
/// affine fit of `h`, the matching fit of `t`, then confirmation with
/// [`is_competitor_preserving`] on the image grids.
pub fn classify(
    spec: &TransformSpec,
    x_grid: &[f64],
    y_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Classification, TransformError> {
    let eval = |x: f64, y: f64| -> Result<(f64, f64, f64), TransformError> {
        let (s, t) = spec.forward(x, y)?;
        Ok((s, t, spec.weight(x, y)?))
    };
    let (x0, y0) = (x_grid[0], y_grid[0]);
    let mut dependence = None;
    'scan: for &x in x_grid {
        for &y in y_grid {
            let (s, t, h) = eval(x, y)?;
            let (s_ref, _, _) = eval(x, y0)?;
            let (_, t_ref, h_ref) = eval(x0, y)?;
            let checks = [
                ("s", s, s_ref, (x, y0)),
                ("t", t, t_ref, (x0, y)),
                ("h", h, h_ref, (x0, y)),
            ];
            for (name, v, r, versus) in checks {
                if !close(v, r) {
                    dependence = Some(DependenceWitness {
                        map: name.into(),
                        at: (x, y),
                        versus,
                        values: (v, r),
                    });
                    break 'scan;
                }
            }
        }
    }
    let image_x: Vec<f64> = x_grid.iter().map(|&x| eval(x, y0).map(|e| e.0)).collect::<Result<_, _>>()?;
    let image_y: Vec<f64> = y_grid.iter().map(|&y| eval(x0, y).map(|e| e.1)).collect::<Result<_, _>>()?;
    let mut sorted_x = image_x.clone();
    sorted_x.sort_by(f64::total_cmp);
    let mut sorted_y = image_y.clone();
    sorted_y.sort_by(f64::total_cmp);
    let not_preserving = |dependence: Option<DependenceWitness>| -> Result<Classification, TransformError> {
        let check = is_competitor_preserving(spec, &sorted_x, &sorted_y, trials, seed, FIT_TOL)?;
        Ok(Classification {
            case: Case::NotPreserving,
            params: Vec::new(),
            dependence,
            counterexample: check.counterexample.clone(),
            preservation: Some(check),
        })
    };
    if dependence.is_some() {
        return not_preserving(dependence);
    }
    let hs: Vec<f64> = y_grid.iter().map(|&y| eval(x0, y).map(|e| e.2)).collect::<Result<_, _>>()?;
    let (params, case) = if hs.iter().all(|&h| close(h, hs[0])) {
        let (a, b, worst) = fit_line(y_grid, &image_y);
        if worst > FIT_TOL {
            return not_preserving(None);
        }
        (vec![("a".to_string(), a), ("b".to_string(), b)], Case::AffineCase)
    } else {
        let (c, icpt, worst) = fit_line(y_grid, &hs);
        if worst > FIT_TOL || c == 0.0 {
            return not_preserving(None);
        }
        let b = -icpt / c;
        let inv: Vec<f64> = y_grid.iter().map(|&y| 1.0 / (y - b)).collect();
        let (a, e, worst) = fit_line(&inv, &image_y);
        if worst > FIT_TOL {
            return not_preserving(None);
        }
        (
            vec![
                ("a".to_string(), a),
                ("b".to_string(), b),
                ("c".to_string(), c),
                ("e".to_string(), e),
            ],
            Case::NumeraireCase,
        )
    };
    let check = is_competitor_preserving(spec, &sorted_x, &sorted_y, trials, seed, FIT_TOL)?;
    if !check.preserving {
        return Ok(Classification {
            case: Case::NotPreserving,
            params,
            dependence: None,
            counterexample: check.counterexample.clone(),
            preservation: Some(check),
        });
    }
    Ok(Classification {
        case,
        params,
        dependence: None,
        counterexample: None,
        preservation: Some(check),
    })
}

fn custom(
    name: &str,
    s: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    t: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    h: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    inverse: impl Fn(f64, f64) -> (f64, f64) + Send + Sync + 'static,
    domain: Domain,
) -> TransformSpec {
    TransformSpec::custom(
        CustomMaps {
            name: name.into(),
            s: Arc::new(s),
            t: Arc::new(t),
            h: Arc::new(h),
            inverse: Arc::new(inverse),
        },
        domain,
    )
    .expect("corpus maps are invertible with positive weight")
}

/// Wraps a declared transform as opaque custom maps on a bounded rectangle.
pub fn black_box(spec: &TransformSpec, domain: Domain) -> TransformSpec {
    let (f, g, w) = (spec.clone(), spec.clone(), spec.clone());
    let inv = spec.clone();
    custom(
        &format!("black_box({})", spec.name()),
        move |x, y| f.forward_unchecked(x, y).0,
        move |x, y| g.forward_unchecked(x, y).1,
        move |x, y| w.weight(x, y).unwrap_or(f64::NAN),
        move |u, v| inv.inverse(u, v).unwrap_or((f64::NAN, f64::NAN)),
        domain,
    )
}

/// Ten invertible maps on `[1, 2]²` outside both admissible families.
pub fn nonconforming_corpus() -> Vec<TransformSpec> {
    let d = Domain::rect((1.0, 2.0), (1.0, 2.0));
    let one = |_: f64, _: f64| 1.0;
    // Piecewise-affine t with a kink at y = 1.5.
    let pw = |y: f64| if y <= 1.5 { y } else { 1.5 + 2.0 * (y - 1.5) };
    let pw_inv = |v: f64| if v <= 1.5 { v } else { 1.5 + (v - 1.5) / 2.0 };
    vec![
        custom("t=y^3", |x, _| x, |_, y| y.powi(3), one, |u, v| (u, v.cbrt()), d),
        custom("t=y+x", |x, _| x, |x, y| y + x, one, |u, v| (u, v - u), d),
        custom("T=(x^2,y^2)", |x, _| x * x, |_, y| y * y, one, |u, v| (u.sqrt(), v.sqrt()), d),
        custom("t=exp(y)", |x, _| x, |_, y| y.exp(), one, |u, v| (u, v.ln()), d),
        custom("t piecewise affine", |x, _| x, move |_, y| pw(y), one, move |u, v| (u, pw_inv(v)), d),
        custom("h=1+x", |x, _| x, |_, y| y, |x, _| 1.0 + x, |u, v| (u, v), d),
        custom("h=y^2", |x, _| x, |_, y| y, |_, y| y * y, |u, v| (u, v), d),
        custom("T=(1/x,1/y), h=1", |x, _| 1.0 / x, |_, y| 1.0 / y, one, |u, v| (1.0 / u, 1.0 / v), d),
        custom("h=y", |x, _| x, |_, y| y, |_, y| y, |u, v| (u, v), d),
        custom("s=x+y", |x, y| x + y, |_, y| y, one, |u, v| (u - v, v), d),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostFamily;

    fn c(entries: Vec<(f64, f64, f64)>) -> Coupling {
        Coupling::new(entries).unwrap()
    }

    #[test]
    fn measure_examples() {
        let img = transform_measure(&TransformSpec::mirror(true, false), &Coupling::dirac(1.0, 2.0)).unwrap();
        assert_eq!(img, Coupling::dirac(-1.0, 2.0));
        let num = TransformSpec::numeraire(1.0, 0.0, 1.0).unwrap();
        let pi = c(vec![(1.0, 0.5, 0.5), (1.0, 1.5, 0.5)]);
        let img = transform_measure(&num, &pi).unwrap();
        assert!((img.mass_at(1.0, 2.0) - 0.25).abs() < 1e-15);
        assert!((img.mass_at(1.0, 2.0 / 3.0) - 0.75).abs() < 1e-15);
        assert!((img.total_mass() - 1.0).abs() < 1e-15);
        let back = inverse_transform_measure(&num, &img).unwrap();
        assert!((back.mass_at(1.0, 0.5) - 0.5).abs() < 1e-12);
        assert!((back.mass_at(1.0, 1.5) - 0.5).abs() < 1e-12);
        let aff = TransformSpec::affine(2.0, 1.0).unwrap();
        assert_eq!(transform_measure(&aff, &Coupling::dirac(0.0, 1.0)).unwrap(), Coupling::dirac(1.0, 3.0));
        assert_eq!(inverse_transform_measure(&aff, &Coupling::dirac(1.0, 3.0)).unwrap(), Coupling::dirac(0.0, 1.0));
    }

    #[test]
    fn numeraire_rejects_pole() {
        let num = TransformSpec::numeraire(1.0, 0.0, 1.0).unwrap();
        assert!(matches!(
            transform_measure(&num, &Coupling::dirac(0.0, 1.0)),
            Err(TransformError::OutsideDomain { .. })
        ));
    }

    #[test]
    fn cost_examples() {
        let num = TransformSpec::numeraire(1.0, 0.0, 1.0).unwrap();
        let base: CostFunction = CostFamily::AbsDiffNeg.into();
        let cp = transform_cost(&num, &base);
        let target: CostFunction = CostFamily::NumeraireAbs.into();
        let mir = transform_cost(&TransformSpec::mirror(true, false), &base);
        let mirrored: CostFunction = CostFamily::MirroredAbs.into();
        for &(x, y) in &[(0.5, 2.0), (1.0, 1.0), (3.0, 0.25), (2.0, 7.0)] {
            assert!((cp.eval(x, y).unwrap() - target.eval(x, y).unwrap()).abs() < 1e-12);
            assert!((mir.eval(-x, y).unwrap() - mirrored.eval(-x, y).unwrap()).abs() < 1e-12);
        }
        let id = transform_cost(&TransformSpec::affine(1.0, 0.0).unwrap(), &CostFamily::Cubic.into());
        assert_eq!(id.eval(0.3, 1.7).unwrap(), CostFunction::from(CostFamily::Cubic).eval(0.3, 1.7).unwrap());
    }

    #[test]
    fn support_examples() {
        let xi = SupportSet::new(vec![(0.0, -1.0), (0.0, 1.0), (-1.0, 0.0)]);
        let img = transform_support(&TransformSpec::mirror(true, false), &xi).unwrap();
        assert_eq!(img, SupportSet::new(vec![(0.0, -1.0), (0.0, 1.0), (1.0, 0.0)]));
        assert_eq!(transform_support(&TransformSpec::affine(1.0, 0.0).unwrap(), &xi).unwrap(), xi);
    }

    #[test]
    fn martingale_examples() {
        let xs = [0.5, 1.0, 2.0, 3.0];
        let ys = [0.25, 0.75, 1.5, 4.0];
        let v = preserves_martingale(&TransformSpec::affine(3.0, -2.0).unwrap(), &xs, &ys, 1e-9).unwrap();
        assert!(v.preserves);
        let v = preserves_martingale(&TransformSpec::numeraire(1.0, 0.0, 1.0).unwrap(), &xs, &ys, 1e-9).unwrap();
        assert!(v.preserves);
        let v = preserves_martingale(&TransformSpec::mirror(true, false), &xs, &ys, 1e-9).unwrap();
        assert!(!v.preserves);
    }

    #[test]
    fn mass_examples() {
        let num = |a, b, c| TransformSpec::numeraire(a, b, c).unwrap();
        let r = numeraire_mass_check(&c(vec![(1.0, 0.5, 0.5), (1.0, 1.5, 0.5)]), &num(1.0, 0.0, 1.0)).unwrap();
        assert!(r.is_probability && r.mean_condition);
        let r = numeraire_mass_check(&Coupling::dirac(2.0, 2.0), &num(1.0, 0.0, 1.0)).unwrap();
        assert_eq!(r.total_mass, 2.0);
        assert!(!r.is_probability && !r.mean_condition);
        let r = numeraire_mass_check(&Coupling::dirac(2.0, 2.0), &num(1.0, 0.0, 0.5)).unwrap();
        assert!(r.is_probability && r.mean_condition);
        assert!(numeraire_mass_check(&Coupling::dirac(2.0, 2.0), &TransformSpec::mirror(true, true)).is_err());
    }

    #[test]
    fn classify_examples() {
        let grid: Vec<f64> = (0..6).map(|i| -1.0 + 0.4 * i as f64).collect();
        let aff = black_box(&TransformSpec::affine(3.0, -1.0).unwrap(), Domain::rect((-1.0, 1.0), (-1.0, 1.0)));
        let k = classify(&aff, &grid, &grid, 200, 1).unwrap();
        assert_eq!(k.case, Case::AffineCase);
        assert!((k.param("a").unwrap() - 3.0).abs() < 1e-9);
        assert!((k.param("b").unwrap() + 1.0).abs() < 1e-9);

        let pos: Vec<f64> = (0..6).map(|i| 1.5 + 0.7 * i as f64).collect();
        let num = black_box(&TransformSpec::numeraire(2.0, 1.0, 1.0).unwrap(), Domain::rect((1.1, 5.0), (1.1, 5.0)));
        let k = classify(&num, &pos, &pos, 200, 1).unwrap();
        assert_eq!(k.case, Case::NumeraireCase);
        assert!((k.param("a").unwrap() - 2.0).abs() < 1e-9);
        assert!((k.param("b").unwrap() - 1.0).abs() < 1e-9);
        assert!((k.param("c").unwrap() - 1.0).abs() < 1e-9);

        let corpus = nonconforming_corpus();
        let g: Vec<f64> = (0..5).map(|i| 1.0 + 0.25 * i as f64).collect();
        let k = classify(&corpus[1], &g, &g, 200, 1).unwrap();
        assert_eq!(k.case, Case::NotPreserving);
        assert_eq!(k.dependence.as_ref().unwrap().map, "t");
        assert!(k.counterexample.is_some());
    }

    #[test]
    fn json_shape() {
        let s: TransformSpec = serde_json::from_str(r#"{"variant":"numeraire","params":{"a":1,"b":0,"c":2}}"#).unwrap();
        assert!(matches!(s.variant, TransformVariant::Numeraire { c, .. } if c == 2.0));
        let back = serde_json::to_value(&s).unwrap();
        assert_eq!(back["variant"], "numeraire");
        assert_eq!(back["domain"]["x"]["hi"], serde_json::Value::Null);
        let again: TransformSpec = serde_json::from_value(back).unwrap();
        assert_eq!(again.domain.x.hi, f64::INFINITY);
        assert!(serde_json::from_str::<TransformSpec>(r#"{"variant":"affine","params":{"a":0,"b":0}}"#).is_err());
    }
}
