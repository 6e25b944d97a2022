use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::lattice::Grid;
use super::SepError;
use crate::transforms::{TransformSpec, TransformVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierKind {
    /// Stop when `d ≥ ψ(y)`.
    Right,
    /// Stop when `d ≤ ψ(y)`.
    Left,
    /// Stop when `d ∉ (ψ₁(y), ψ₂(y))`, with `ψ₁ ≤ 0 ≤ ψ₂`.
    TwoSidedInner,
    /// Stop when `d ∈ (ψ₁(y), ψ₂(y))`.
    TwoSidedOuter,
}

/// Phase coordinate: `d = y − ℓ` or `d = y + ℓ` for a path labelled `ℓ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    DMinus,
    DPlus,
}

/// Where the walk of a path labelled `ℓ` starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// At `ℓ`.
    #[default]
    Label,
    /// At `−ℓ`; mirrored barriers use this so that a path labelled `−x` is the
    /// walk started at `x`.
    ReflectedLabel,
}

/// Closed regions include the threshold graph; open ones exclude it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Openness {
    Open,
    Closed,
}

/// Phase-space stopping region on a y-grid.
///
/// Thresholds are stored in units of the grid step, so `ψ(y_i) = u_i·δ`;
/// `±∞` are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Barrier {
    pub kind: BarrierKind,
    pub phase: Phase,
    pub anchor: Anchor,
    pub openness: Openness,
    pub exclude_time_zero: bool,
    grid: Grid,
    u: Vec<f64>,
    u2: Option<Vec<f64>>,
}

/// Per-level stop rule on the integer phase coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Cut {
    /// Stop if `d ≤ le` or `d ≥ ge`.
    Rays { le: i64, ge: i64 },
    /// Stop if `from ≤ d ≤ to`.
    Band { from: i64, to: i64 },
}

impl Cut {
    pub(crate) fn stops(self, d: i64) -> bool {
        match self {
            Cut::Rays { le, ge } => d <= le || d >= ge,
            Cut::Band { from, to } => from <= d && d <= to,
        }
    }
}

const SNAP: f64 = 1e-9;

/// Smallest integer `d` with `d ≥ u` (closed) or `d > u` (open).
pub(crate) fn ge_cut(u: f64, open: bool) -> i64 {
    if u == f64::INFINITY {
        i64::MAX
    } else if u == f64::NEG_INFINITY {
        i64::MIN
    } else if open {
        (u + SNAP).floor() as i64 + 1
    } else {
        (u - SNAP).ceil() as i64
    }
}

/// Largest integer `d` with `d ≤ u` (closed) or `d < u` (open).
pub(crate) fn le_cut(u: f64, open: bool) -> i64 {
    if u == f64::INFINITY {
        i64::MAX
    } else if u == f64::NEG_INFINITY {
        i64::MIN
    } else if open {
        (u - SNAP).ceil() as i64 - 1
    } else {
        (u + SNAP).floor() as i64
    }
}

/// Stop rule of one level; `u2` is ignored for one-sided kinds.
pub(crate) fn level_cut(kind: BarrierKind, u: f64, u2: f64, open: bool) -> Cut {
    match kind {
        BarrierKind::Right => Cut::Rays {
            le: i64::MIN,
            ge: ge_cut(u, open),
        },
        BarrierKind::Left => Cut::Rays {
            le: le_cut(u, open),
            ge: i64::MAX,
        },
        BarrierKind::TwoSidedInner => Cut::Rays {
            le: le_cut(u, open),
            ge: ge_cut(u2, open),
        },
        BarrierKind::TwoSidedOuter => Cut::Band {
            from: ge_cut(u, open),
            to: le_cut(u2, open),
        },
    }
}

fn snap_steps(v: f64) -> f64 {
    let r = v.round();
    if v.is_finite() && (v - r).abs() <= SNAP {
        r
    } else {
        v
    }
}

/// Absorbing levels of one start atom.
#[derive(Debug, Clone)]
pub(crate) struct StopSet {
    /// Grid index where the walk starts.
    pub start: usize,
    pub stop: Vec<bool>,
}

impl Barrier {
    /// Builds a barrier from thresholds in real units, one per grid level.
    /// Defaults: `d_minus` phase, label anchor, `exclude_time_zero = true`,
    /// closed regions except for the outer band, which is open.
    pub fn new(kind: BarrierKind, grid: Grid, psi: Vec<f64>, psi2: Option<Vec<f64>>) -> Result<Self, SepError> {
        let to_steps = |v: Vec<f64>| v.into_iter().map(|p| snap_steps(p / grid.delta)).collect::<Vec<_>>();
        Self::from_steps(kind, grid, to_steps(psi), psi2.map(to_steps))
    }

    /// Builds a barrier from thresholds in grid steps.
    pub fn from_steps(kind: BarrierKind, grid: Grid, u: Vec<f64>, u2: Option<Vec<f64>>) -> Result<Self, SepError> {
        let b = Barrier {
            kind,
            phase: Phase::DMinus,
            anchor: Anchor::Label,
            openness: match kind {
                BarrierKind::TwoSidedOuter => Openness::Open,
                _ => Openness::Closed,
            },
            exclude_time_zero: true,
            grid,
            u,
            u2,
        };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<(), SepError> {
        let n = self.grid.len;
        if self.u.len() != n {
            return Err(SepError::BadBarrier(format!("psi has {} levels, grid has {n}", self.u.len())));
        }
        if self.u.iter().chain(self.u2.iter().flatten()).any(|v| v.is_nan()) {
            return Err(SepError::BadBarrier("NaN threshold".into()));
        }
        let two_sided = matches!(self.kind, BarrierKind::TwoSidedInner | BarrierKind::TwoSidedOuter);
        match (&self.u2, two_sided) {
            (Some(v), true) if v.len() == n => {}
            (Some(v), true) => {
                return Err(SepError::BadBarrier(format!("psi2 has {} levels, grid has {n}", v.len())));
            }
            (None, true) => return Err(SepError::BadBarrier("two-sided barrier needs psi2".into())),
            (Some(_), false) => return Err(SepError::BadBarrier("one-sided barrier with psi2".into())),
            (None, false) => {}
        }
        if self.kind == BarrierKind::TwoSidedInner {
            let u2 = self.u2.as_ref().unwrap();
            if let Some(i) = (0..n).find(|&i| !(self.u[i] <= 0.0 && 0.0 <= u2[i])) {
                return Err(SepError::BadBarrier(format!(
                    "inner band needs psi1 <= 0 <= psi2, violated at y = {}",
                    self.grid.y(i)
                )));
            }
        }
        Ok(())
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self
    }

    pub fn with_anchor(mut self, anchor: Anchor) -> Self {
        self.anchor = anchor;
        self
    }

    pub fn with_openness(mut self, openness: Openness) -> Self {
        self.openness = openness;
        self
    }

    pub fn with_exclude_time_zero(mut self, flag: bool) -> Self {
        self.exclude_time_zero = flag;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Thresholds in grid steps.
    pub fn psi_steps(&self) -> &[f64] {
        &self.u
    }

    pub fn psi2_steps(&self) -> Option<&[f64]> {
        self.u2.as_deref()
    }

    /// `(y, ψ(y))` in real units.
    pub fn psi(&self) -> Vec<(f64, f64)> {
        self.u.iter().enumerate().map(|(i, &u)| (self.grid.y(i), u * self.grid.delta)).collect()
    }

    pub fn psi2(&self) -> Option<Vec<(f64, f64)>> {
        self.u2
            .as_ref()
            .map(|u2| u2.iter().enumerate().map(|(i, &u)| (self.grid.y(i), u * self.grid.delta)).collect())
    }

    pub(crate) fn cuts(&self, openness: Openness) -> Vec<Cut> {
        let open = openness == Openness::Open;
        (0..self.grid.len)
            .map(|i| level_cut(self.kind, self.u[i], self.u2.as_ref().map_or(0.0, |v| v[i]), open))
            .collect()
    }

    /// Absorbing levels and start index for a path labelled `label`.
    pub(crate) fn stop_set(&self, label: f64, cuts: &[Cut]) -> Result<StopSet, SepError> {
        let g = &self.grid;
        let kl = g.steps_of(label).ok_or(SepError::OffGrid(label))?;
        let needs_offset = self.phase == Phase::DPlus || self.anchor == Anchor::ReflectedLabel;
        let o2 = if needs_offset {
            g.reflection_offset().ok_or_else(|| {
                SepError::Unsupported("reflected phase or anchor on a grid not symmetric about 0".into())
            })?
        } else {
            0
        };
        let start_k = match self.anchor {
            Anchor::Label => kl,
            Anchor::ReflectedLabel => -kl - o2,
        };
        let start = start_k - g.k_lo;
        if start < 0 || start as usize >= g.len {
            return Err(SepError::OffGrid(g.y(0) + start as f64 * g.delta));
        }
        let stop = (0..g.len)
            .map(|i| {
                let k = g.k_lo + i as i64;
                let d = match self.phase {
                    Phase::DMinus => k - kl,
                    Phase::DPlus => k + kl + o2,
                };
                cuts[i].stops(d)
            })
            .collect();
        Ok(StopSet {
            start: start as usize,
            stop,
        })
    }
}

/// Threshold value in JSON: a number, or `"+inf"` / `"-inf"`.
struct Ext(f64);

impl Serialize for Ext {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("+inf")
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Ext {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Ext(v)),
            Raw::Str(s) => match s.as_str() {
                "+inf" | "inf" => Ok(Ext(f64::INFINITY)),
                "-inf" => Ok(Ext(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("bad threshold {other:?}"))),
            },
        }
    }
}

#[derive(Serialize, Deserialize)]
struct BarrierRepr {
    kind: BarrierKind,
    phase: Phase,
    psi: Vec<(f64, Ext)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    psi2: Option<Vec<(f64, Ext)>>,
    exclude_time_zero: bool,
    #[serde(default)]
    anchor: Anchor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    openness: Option<Openness>,
    /// Exact grid; inferred from the `psi` levels when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<Grid>,
}

impl Serialize for Barrier {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let pairs = |v: Vec<(f64, f64)>| v.into_iter().map(|(y, d)| (y, Ext(d))).collect();
        BarrierRepr {
            kind: self.kind,
            phase: self.phase,
            psi: pairs(self.psi()),
            psi2: self.psi2().map(pairs),
            exclude_time_zero: self.exclude_time_zero,
            anchor: self.anchor,
            openness: Some(self.openness),
            grid: Some(self.grid),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Barrier {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let r = BarrierRepr::deserialize(d)?;
        if r.psi.len() < 2 {
            return Err(D::Error::custom("psi needs at least two grid levels"));
        }
        let ys: Vec<f64> = r.psi.iter().map(|p| p.0).collect();
        let delta = ys[1] - ys[0];
        if !(delta > 0.0) || ys.windows(2).any(|w| ((w[1] - w[0]) - delta).abs() > 1e-9 * delta.max(1.0)) {
            return Err(D::Error::custom("psi levels must form an increasing arithmetic grid"));
        }
        let grid = match r.grid {
            Some(g) => {
                if g.len != ys.len() || ys.iter().enumerate().any(|(i, &y)| (g.y(i) - y).abs() > 1e-9 * g.delta) {
                    return Err(D::Error::custom("psi levels do not match the grid"));
                }
                g
            }
            None => {
                let k_lo = (ys[0] / delta).round() as i64;
                Grid {
                    k_lo,
                    len: ys.len(),
                    delta,
                    shift: ys[0] - k_lo as f64 * delta,
                }
            }
        };
        if let Some(p2) = &r.psi2 {
            if p2.iter().zip(&ys).any(|(a, &y)| (a.0 - y).abs() > 1e-9 * delta) || p2.len() != ys.len() {
                return Err(D::Error::custom("psi2 must use the same levels as psi"));
            }
        }
        let psi = r.psi.into_iter().map(|p| p.1 .0).collect();
        let psi2 = r.psi2.map(|v| v.into_iter().map(|p| p.1 .0).collect());
        let b = Barrier::new(r.kind, grid, psi, psi2).map_err(D::Error::custom)?;
        let b = b.with_phase(r.phase).with_anchor(r.anchor).with_exclude_time_zero(r.exclude_time_zero);
        Ok(match r.openness {
            Some(o) => b.with_openness(o),
            None => b,
        })
    }
}

/// Moves a one-sided barrier along a mirror or an increasing affine map.
///
/// `Mirror(flip_x)` turns a right barrier `ψ` into the left barrier
/// `ψ'(y) = 2y − ψ(y)` in the same phase, with the anchor reflected: a path
/// labelled `−x` then runs the walk started at `x` and stops exactly when the
/// original did. `Affine(a > 0, b)` rescales the grid by `y ↦ ay + b` and the
/// thresholds by `d ↦ a·d`.
pub fn transform_barrier(spec: &TransformSpec, barrier: &Barrier) -> Result<Barrier, SepError> {
    if barrier.phase != Phase::DMinus {
        return Err(SepError::Unsupported("only d_minus barriers can be transformed".into()));
    }
    match spec.variant {
        TransformVariant::Mirror { flip_x: true, flip_y: false } => {
            let kind = match barrier.kind {
                BarrierKind::Right => BarrierKind::Left,
                BarrierKind::Left => BarrierKind::Right,
                other => return Err(SepError::Unsupported(format!("mirror of a {other:?} barrier"))),
            };
            let g = barrier.grid;
            let o2 = g
                .reflection_offset()
                .ok_or_else(|| SepError::Unsupported("mirror on a grid not symmetric about 0".into()))?;
            // 2y/δ in steps is 2k + 2·shift/δ.
            let u = barrier
                .u
                .iter()
                .enumerate()
                .map(|(i, &u)| (2 * (g.k_lo + i as i64) + o2) as f64 - u)
                .collect();
            let anchor = match barrier.anchor {
                Anchor::Label => Anchor::ReflectedLabel,
                Anchor::ReflectedLabel => Anchor::Label,
            };
            Ok(Barrier {
                kind,
                anchor,
                grid: g,
                u,
                u2: None,
                ..barrier.clone()
            })
        }
        TransformVariant::Affine { a, b } if a > 0.0 => {
            if barrier.anchor == Anchor::ReflectedLabel && b != 0.0 {
                return Err(SepError::Unsupported("shifting a reflected-anchor barrier".into()));
            }
            let g = barrier.grid;
            let delta = a * g.delta;
            let grid = Grid {
                k_lo: g.k_lo,
                len: g.len,
                delta,
                shift: a * g.shift + b,
            };
            Ok(Barrier {
                grid,
                ..barrier.clone()
            })
        }
        _ => Err(SepError::Unsupported(format!("barrier transform under {}", spec.name()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::covering(0.5, -2.0, 2.0).unwrap()
    }

    #[test]
    fn cut_arithmetic() {
        assert_eq!(ge_cut(1.0, false), 1);
        assert_eq!(ge_cut(1.0, true), 2);
        assert_eq!(ge_cut(0.5, false), 1);
        assert_eq!(ge_cut(0.5, true), 1);
        assert_eq!(le_cut(1.0, false), 1);
        assert_eq!(le_cut(1.0, true), 0);
        assert_eq!(le_cut(-0.5, true), -1);
        assert_eq!(ge_cut(f64::INFINITY, true), i64::MAX);
        assert_eq!(le_cut(f64::NEG_INFINITY, false), i64::MIN);
    }

    #[test]
    fn inner_band_sign_constraint() {
        let g = grid();
        let n = g.len;
        assert!(Barrier::new(BarrierKind::TwoSidedInner, g, vec![0.5; n], Some(vec![1.0; n])).is_err());
        assert!(Barrier::new(BarrierKind::TwoSidedInner, g, vec![-1.0; n], Some(vec![1.0; n])).is_ok());
        assert!(Barrier::new(BarrierKind::Right, g, vec![0.0; n], Some(vec![1.0; n])).is_err());
        assert!(Barrier::new(BarrierKind::Right, g, vec![0.0; n - 1], None).is_err());
    }

    #[test]
    fn json_round_trip_with_infinities() {
        let g = grid();
        let mut psi = vec![f64::INFINITY; g.len];
        psi[0] = f64::NEG_INFINITY;
        psi[3] = 0.5;
        let b = Barrier::new(BarrierKind::Right, g, psi, None).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert!(s.contains("\"+inf\"") && s.contains("\"-inf\""));
        assert!(s.starts_with("{\"kind\":\"right\",\"phase\":\"d_minus\",\"psi\":[[-2.0,\"-inf\"]"));
        let back: Barrier = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn mirror_is_exact_involution() {
        let g = Grid::covering(0.05, -1.0, 1.0).unwrap();
        let psi: Vec<f64> = (0..g.len).map(|i| if i % 3 == 0 { f64::INFINITY } else { (i as f64 - 17.0) * 0.05 }).collect();
        let b = Barrier::new(BarrierKind::Right, g, psi, None).unwrap();
        let m = TransformSpec::mirror(true, false);
        let once = transform_barrier(&m, &b).unwrap();
        assert_eq!(once.kind, BarrierKind::Left);
        for (i, (&u, &v)) in b.psi_steps().iter().zip(once.psi_steps()).enumerate() {
            assert_eq!(v, 2.0 * (g.k_lo + i as i64) as f64 - u);
        }
        assert_eq!(transform_barrier(&m, &once).unwrap(), b);
        assert!(transform_barrier(&TransformSpec::mirror(false, true), &b).is_err());
        assert_eq!(transform_barrier(&TransformSpec::affine(1.0, 0.0).unwrap(), &b).unwrap(), b);
    }
}
