//! Scenario dispatch.

use std::collections::BTreeMap;

use motforge::lp::LpStatus;
use motforge::measures::{Coupling, DiscreteMeasure, SUPPORT_THRESHOLD};
use motforge::monotone::is_finitely_monotone;
use motforge::motlp::{check_left_monotone, solve_mot, solve_mot_tiebreak};
use motforge::pipelines::{mirror_pipeline, numeraire_pipeline, random_instance, Instance, PipelineReport};
use motforge::sepsim::{
    check_stop_go, compare_open_closed, fit_with, Barrier, BarrierKind, FitOptions, Grid, Lattice,
};
use motforge::transforms::{
    black_box, classify, nonconforming_corpus, numeraire_mass_check, transform_cost, transform_measure, Domain,
    TransformSpec, TransformVariant,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::report::{Report, Table};
use crate::scenario::*;

#[derive(Debug, Error)]
#[error("scenario {scenario}: {message}")]
pub struct RunError {
    pub scenario: String,
    pub message: String,
}

/// Result, tables and failed assertions of one run.
#[derive(Default)]
struct Outcome {
    result: Value,
    tables: BTreeMap<String, Table>,
    failures: Vec<String>,
}

impl Outcome {
    fn table(&mut self, name: &str, t: Table) {
        self.tables.insert(name.to_string(), t);
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(msg());
        }
    }
}

type Step<T> = Result<T, String>;

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn finite(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn coupling_table(q: &Coupling) -> Table {
    let mut t = Table::new(&["x", "y", "mass"]);
    for &(x, y, m) in q.entries() {
        t.push(vec![x, y, m]);
    }
    t
}

fn measure_table(m: &DiscreteMeasure, label: &str) -> Table {
    let mut t = Table::new(&[label, "mass"]);
    for &(p, w) in m.atoms() {
        t.push(vec![p, w]);
    }
    t
}

pub fn run_scenario(s: &Scenario) -> Result<Report, RunError> {
    log::info!("running {} ({})", s.name, s.kind);
    let out = match &s.spec {
        Spec::MotSolve(p) => mot_solve(p),
        Spec::MonotoneCheck(p) => monotone_check(p, s.seed()),
        Spec::TransformApply(p) => transform_apply(p),
        Spec::TransformClassify(p) => transform_classify(p, s.seed()),
        Spec::SepFit(p) => sep_fit(p, s.seed()),
        Spec::SepCompare(p) => sep_compare(p, s.seed()),
        Spec::StopGo(p) => stop_go(p, s.seed()),
        Spec::SymmetrySuite(p) => symmetry_suite(p, s.seed()),
    }
    .map_err(|message| RunError {
        scenario: s.name.clone(),
        message,
    })?;
    Ok(Report {
        scenario: s.name.clone(),
        kind: s.kind.tag().to_string(),
        seed: s.seed,
        passed: out.failures.is_empty(),
        failures: out.failures,
        result: out.result,
        tables: out.tables,
    })
}

fn mot_solve(p: &MotSolveSpec) -> Step<Outcome> {
    let sol = match &p.tiebreak {
        Some(t) => solve_mot_tiebreak(&p.mu, &p.nu, &p.cost, p.sense, t),
        None => solve_mot(&p.mu, &p.nu, &p.cost, p.sense),
    }
    .map_err(|e| e.to_string())?;
    let mut out = Outcome::default();
    let support = sol.coupling.support(SUPPORT_THRESHOLD);
    let mart = sol.coupling.is_martingale(1e-9);
    out.result = json!({
        "status": sol.status,
        "value": finite(sol.value),
        "cost": p.cost.name(),
        "sense": p.sense,
        "tiebreak": p.tiebreak.as_ref().map(|t| t.name()),
        "support_size": support.len(),
        "martingale": mart.holds,
        "left_monotone_violation": check_left_monotone(&support),
    });
    out.check(sol.status == LpStatus::Optimal, || format!("solver status {:?}", sol.status));
    out.check(mart.holds, || format!("coupling is not a martingale at x = {:?}", mart.witness));
    if let Some(e) = &p.expect {
        out.check((sol.value - e.value).abs() <= e.tol, || {
            format!("value {} differs from expected {} by more than {}", sol.value, e.value, e.tol)
        });
    }
    out.table("coupling", coupling_table(&sol.coupling));
    Ok(out)
}

fn monotone_check(p: &MonotoneCheckSpec, seed: u64) -> Step<Outcome> {
    let v = is_finitely_monotone(&p.support, &p.cost, p.max_support, p.trials, seed).map_err(|e| e.to_string())?;
    let mut out = Outcome::default();
    out.result = json!({
        "cost": p.cost.name(),
        "verdict": to_value(&v),
    });
    if let Some(want) = p.expect_monotone {
        out.check(v.monotone == want, || format!("expected monotone = {want}, found {}", v.monotone));
    }
    if let Some(c) = &v.certificate {
        out.table("alpha", coupling_table(&c.alpha));
        out.table("beta", coupling_table(&c.beta));
    }
    Ok(out)
}

fn transform_apply(p: &TransformApplySpec) -> Step<Outcome> {
    let spec = &p.transform;
    let image = transform_measure(spec, &p.coupling).map_err(|e| e.to_string())?;
    let before = p.coupling.is_martingale(p.tol);
    let after = image.is_martingale(p.tol);
    let mut out = Outcome::default();
    let numeraire = match spec.variant {
        TransformVariant::Numeraire { .. } => Some(numeraire_mass_check(&p.coupling, spec).map_err(|e| e.to_string())?),
        _ => None,
    };
    let mut cost_report = Value::Null;
    if let Some(c) = &p.cost {
        let cp = transform_cost(spec, c);
        let direct = c.integrate(&p.coupling).map_err(|e| e.to_string())?;
        let pushed = cp.integrate(&image).map_err(|e| e.to_string())?;
        let mut t = Table::new(&["x", "y", "cost"]);
        for &(x, y, _) in image.entries() {
            t.push(vec![x, y, cp.eval(x, y).map_err(|e| e.to_string())?]);
        }
        out.table("cost", t);
        out.check((direct - pushed).abs() <= p.tol * (1.0 + direct.abs()), || {
            format!("transformed cost integrates to {pushed}, original to {direct}")
        });
        cost_report = json!({"name": cp.name(), "integral": direct, "image_integral": pushed});
    }
    out.result = json!({
        "transform": spec.name(),
        "source_martingale": to_value(&before),
        "image_martingale": to_value(&after),
        "image_mass": image.total_mass(),
        "numeraire_mass": numeraire.as_ref().map(to_value),
        "cost": cost_report,
    });
    if let Some(want) = p.expect_martingale {
        out.check(after.holds == want, || format!("expected image martingale = {want}, found {}", after.holds));
    }
    out.table("image", coupling_table(&image));
    Ok(out)
}

fn transform_classify(p: &TransformClassifySpec, seed: u64) -> Step<Outcome> {
    let spec: TransformSpec = match (&p.transform, p.corpus) {
        (Some(t), _) => t.clone(),
        (None, Some(i)) => {
            let corpus = nonconforming_corpus();
            let n = corpus.len();
            corpus
                .into_iter()
                .nth(i)
                .ok_or_else(|| format!("corpus index {i} out of range (corpus has {n} maps)"))?
        }
        (None, None) => unreachable!("validated at load time"),
    };
    let spec = if p.black_box {
        let lo_hi = |g: &[f64]| {
            (
                g.iter().cloned().fold(f64::INFINITY, f64::min),
                g.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            )
        };
        black_box(&spec, Domain::rect(lo_hi(&p.x_grid), lo_hi(&p.y_grid)))
    } else {
        spec
    };
    let c = classify(&spec, &p.x_grid, &p.y_grid, p.trials, seed).map_err(|e| e.to_string())?;
    let mut out = Outcome::default();
    out.result = json!({
        "transform": spec.name(),
        "classification": to_value(&c),
    });
    if let Some(want) = p.expect_case {
        out.check(c.case == want, || format!("expected {want:?}, classified as {:?}", c.case));
    }
    Ok(out)
}

fn barrier_table(b: &Barrier) -> Table {
    let psi2 = b.psi2();
    let mut t = match psi2 {
        Some(_) => Table::new(&["y", "psi", "psi2"]),
        None => Table::new(&["y", "psi"]),
    };
    for (i, &(y, v)) in b.psi().iter().enumerate() {
        let mut row = vec![y, v];
        if let Some(p2) = &psi2 {
            row.push(p2[i].1);
        }
        if row.iter().all(|r| r.is_finite()) {
            t.push(row);
        }
    }
    t
}

fn sep_fit(p: &SepFitSpec, seed: u64) -> Step<Outcome> {
    let mut lat = Lattice::covering(&p.mu, &p.nu, p.delta, p.margin, seed).map_err(|e| e.to_string())?;
    if let Some(h) = p.horizon {
        lat.horizon = h;
    }
    let (mu, snap_mu) = lat.snap(&p.mu).map_err(|e| e.to_string())?;
    let (nu, snap_nu) = lat.snap(&p.nu).map_err(|e| e.to_string())?;
    let kind = match p.barrier {
        FitShape::Right => BarrierKind::Right,
        FitShape::Inner => BarrierKind::TwoSidedInner,
        FitShape::Outer => BarrierKind::TwoSidedOuter,
    };
    let opts = FitOptions {
        max_sweeps: p.max_sweeps,
        exclude_time_zero: p.exclude_time_zero,
    };
    let fit = fit_with(&mu, &nu, &lat, kind, opts).map_err(|e| e.to_string())?;
    let max_w1 = p.max_w1.unwrap_or(2.0 * p.delta);
    let lost = fit.embedding.truncated + fit.embedding.escaped;
    let mut out = Outcome::default();
    out.result = json!({
        "barrier_kind": p.barrier,
        "delta": p.delta,
        "grid": to_value(&lat.grid),
        "w1": fit.w1,
        "max_w1": max_w1,
        "sweeps": fit.sweeps,
        "dispersed": fit.dispersed,
        "truncated": fit.embedding.truncated,
        "escaped": fit.embedding.escaped,
        "snap": {"mu": to_value(&snap_mu), "nu": to_value(&snap_nu)},
        "barrier": to_value(&fit.barrier),
    });
    out.check(fit.w1 <= max_w1, || format!("W1 misfit {} exceeds {max_w1}", fit.w1));
    out.check(lost <= 1e-6, || format!("{lost} of the mass was never stopped"));
    out.table("barrier", barrier_table(&fit.barrier));
    out.table("law", measure_table(&fit.embedding.law, "y"));
    out.table("target", measure_table(&nu, "y"));
    out.table("coupling", coupling_table(&fit.embedding.coupling));
    Ok(out)
}

fn sep_compare(p: &SepCompareSpec, seed: u64) -> Step<Outcome> {
    let kind = match p.barrier {
        OneSided::Right => BarrierKind::Right,
        OneSided::Left => BarrierKind::Left,
    };
    let mut curve = Table::new(&["delta", "fraction", "stderr"]);
    let mut details = Vec::new();
    for &delta in &p.deltas {
        let grid = Grid::covering(delta, p.extent[0], p.extent[1]).map_err(|e| e.to_string())?;
        let psi = grid.ys().iter().map(|&y| interpolate(&p.psi, y)).collect();
        let barrier = Barrier::new(kind, grid, psi, None)
            .map_err(|e| e.to_string())?
            .with_exclude_time_zero(p.exclude_time_zero);
        let lat = Lattice::new(grid, p.horizon.unwrap_or(Lattice::DEFAULT_HORIZON), seed);
        let start = match (&p.mu, p.start_grid) {
            (Some(m), _) => m.clone(),
            (None, Some([lo, hi])) => {
                let n = ((hi - lo) / delta).round() as usize + 1;
                DiscreteMeasure::uniform_grid(lo, hi, n)
            }
            (None, None) => unreachable!("validated at load time"),
        };
        let (mu, snap) = lat.snap(&start).map_err(|e| e.to_string())?;
        let r = compare_open_closed(&barrier, &mu, &lat, p.n_paths, p.epsilon_steps * delta).map_err(|e| e.to_string())?;
        curve.push(vec![delta, r.fraction, r.stderr]);
        details.push(json!({"delta": delta, "report": to_value(&r), "snap": to_value(&snap)}));
    }
    let mut out = Outcome::default();
    let rows = curve.rows.clone();
    if let Some(e) = &p.expect {
        if e.non_increasing {
            for w in rows.windows(2) {
                let slack = e.tol_se * (w[0][2].powi(2) + w[1][2].powi(2)).sqrt();
                out.check(w[1][1] <= w[0][1] + slack, || {
                    format!("fraction rose from {} at delta {} to {} at delta {}", w[0][1], w[0][0], w[1][1], w[1][0])
                });
            }
        }
        if let (Some(m), Some(last)) = (e.max_final, rows.last()) {
            out.check(last[1] <= m, || format!("final fraction {} exceeds {m}", last[1]));
        }
        if let Some(m) = e.min_all {
            for r in &rows {
                out.check(r[1] >= m, || format!("fraction {} at delta {} is below {m}", r[1], r[0]));
            }
        }
    }
    out.result = json!({
        "barrier_kind": p.barrier,
        "n_paths": p.n_paths,
        "epsilon_steps": p.epsilon_steps,
        "levels": details,
    });
    out.table("refinement", curve);
    Ok(out)
}

fn stop_go(p: &StopGoSpec, seed: u64) -> Step<Outcome> {
    // Only the step and the seed of the lattice matter here.
    let grid = Grid::new(p.delta, 0, 1).map_err(|e| e.to_string())?;
    let lat = Lattice::new(grid, Lattice::DEFAULT_HORIZON, seed);
    let r = check_stop_go(p.f, p.g, p.gamma, p.gamma2, p.sigma, &lat, p.n_samples).map_err(|e| e.to_string())?;
    let mut out = Outcome::default();
    out.result = json!({
        "sigma": to_value(&p.sigma),
        "report": to_value(&r),
    });
    if let Some(want) = p.expect_verdict {
        out.check(r.verdict == want, || format!("expected {want:?}, got {:?}", r.verdict));
    }
    Ok(out)
}

enum Pipeline {
    Mirror,
    Numeraire,
}

fn symmetry_suite(p: &SymmetrySuiteSpec, seed: u64) -> Step<Outcome> {
    let pipeline = match p.transform.variant {
        TransformVariant::Mirror {
            flip_x: true,
            flip_y: false,
        } => Pipeline::Mirror,
        TransformVariant::Numeraire { a, b, c } if a == 1.0 && b == 0.0 && c == 1.0 => Pipeline::Numeraire,
        _ => {
            return Err(format!(
                "no paired pipeline for {}; use mirror(flip_x) or numeraire(1, 0, 1)",
                p.transform.name()
            ))
        }
    };
    let mut instances: Vec<Instance> = p.instances.clone();
    if let Some(r) = &p.random {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let positive = matches!(pipeline, Pipeline::Numeraire);
        instances.extend((0..r.count).map(|_| random_instance(&mut rng, r.max_mu, r.max_nu, positive)));
    }
    let reports: Vec<PipelineReport> = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            match pipeline {
                Pipeline::Mirror => mirror_pipeline(&inst.mu, &inst.nu),
                Pipeline::Numeraire => numeraire_pipeline(&inst.mu, &inst.nu),
            }
            .map_err(|e| format!("instance {i}: {e}"))
        })
        .collect::<Result<_, _>>()?;
    let mut out = Outcome::default();
    let mut t = Table::new(&["instance", "value_direct", "value_image", "value_gap", "support_bijection"]);
    for (i, r) in reports.iter().enumerate() {
        t.push(vec![
            i as f64,
            r.value_direct,
            r.value_image,
            r.value_gap,
            if r.support_bijection { 1.0 } else { 0.0 },
        ]);
        out.check(r.value_gap <= p.tol, || format!("instance {i}: value gap {}", r.value_gap));
        out.check(r.support_bijection, || format!("instance {i}: supports do not correspond"));
    }
    let worst = reports.iter().map(|r| r.value_gap).fold(0.0, f64::max);
    out.result = json!({
        "transform": p.transform.name(),
        "instances": reports.len(),
        "worst_value_gap": worst,
        "all_bijective": reports.iter().all(|r| r.support_bijection),
        "pairs": reports.iter().map(|r| json!({
            "direct": to_value(&r.direct),
            "image": to_value(&r.image),
        })).collect::<Vec<_>>(),
    });
    out.table("instances", t);
    Ok(out)
}
