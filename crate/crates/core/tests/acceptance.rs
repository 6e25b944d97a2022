//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use motforge::cost::{CostFamily, CostFunction};
use motforge::lp::LpStatus;
use motforge::measures::{wasserstein1, Coupling, DiscreteMeasure};
use motforge::monotone::is_finitely_monotone;
use motforge::motlp::{
    check_left_monotone, check_right_monotone, left_monotone_violation_mass, monotone_graphs_violation_mass,
    solve_mot, Direction, Sense,
};
use motforge::pipelines::{mirror_pipeline, numeraire_pipeline, random_instance, random_martingale_coupling};
use motforge::sepsim::{
    check_stop_go, compare_open_closed, embed, fit_right_barrier, fit_two_sided, transform_barrier, Barrier,
    BarrierKind, Grid, Lattice, PathFunctional, Sigma, StopGo, StoppedPath, TwoSided,
};
use motforge::transforms::{
    black_box, classify, is_competitor_preserving, nonconforming_corpus, numeraire_mass_check, transform_measure,
    Case, Domain, TransformSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn m(p: &[f64], w: &[f64]) -> DiscreteMeasure {
    DiscreteMeasure::new(p, w).unwrap()
}

fn c1_trivial() -> Outcome {
    let sol = solve_mot(
        &DiscreteMeasure::dirac(0.0),
        &m(&[-1.0, 1.0], &[0.5, 0.5]),
        &CostFamily::AbsDiffNeg.into(),
        Sense::Min,
    )
    .map_err(err)?;
    ensure(sol.status == LpStatus::Optimal, || format!("status {:?}", sol.status))?;
    ensure((sol.value + 1.0).abs() <= 1e-12, || format!("value {}", sol.value))?;
    let expect = Coupling::new(vec![(0.0, -1.0, 0.5), (0.0, 1.0, 0.5)]).unwrap();
    ensure(sol.coupling == expect, || format!("coupling {:?}", sol.coupling.entries()))?;
    Ok(format!("value {:.3e} off", (sol.value + 1.0).abs()))
}

fn c2_derived() -> Outcome {
    let mu = m(&[-1.0, 1.0], &[0.5, 0.5]);
    let nu = m(&[-2.0, 0.0, 2.0], &[1.0 / 3.0; 3]);
    let cost: CostFunction = CostFamily::SmNeg.into();
    let (a, b) = common::martingale_polytope(&mu, &nu);
    let verts = common::vertices(&a, &b);
    ensure(!verts.is_empty(), || "no vertices".into())?;
    let cvec: Vec<f64> = mu
        .atoms()
        .iter()
        .flat_map(|&(x, _)| nu.atoms().iter().map(move |&(y, _)| -x * y * y))
        .collect();
    let vals: Vec<f64> = verts.iter().map(|q| q.iter().zip(&cvec).map(|(q, c)| q * c).sum()).collect();
    let (vmin, vmax) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let lo = solve_mot(&mu, &nu, &cost, Sense::Min).map_err(err)?;
    let hi = solve_mot(&mu, &nu, &cost, Sense::Max).map_err(err)?;
    ensure((lo.value + 2.0 / 3.0).abs() <= 1e-9, || format!("min {}", lo.value))?;
    ensure((hi.value - 2.0 / 3.0).abs() <= 1e-9, || format!("max {}", hi.value))?;
    ensure((lo.value - vmin).abs() <= 1e-9 && (hi.value - vmax).abs() <= 1e-9, || {
        format!("vertex oracle [{vmin}, {vmax}] vs LP [{}, {}]", lo.value, hi.value)
    })?;
    Ok(format!("{} vertices, range [{vmin:.12}, {vmax:.12}]", verts.len()))
}

fn instances_3_4() -> Vec<(DiscreteMeasure, DiscreteMeasure)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..100)
        .map(|_| {
            let i = random_instance(&mut rng, 8, 10, false);
            (i.mu, i.nu)
        })
        .collect()
}

fn c3_left_monotone() -> Outcome {
    let mut total_pts = 0;
    for (k, (mu, nu)) in instances_3_4().iter().enumerate() {
        let a = solve_mot(mu, nu, &CostFamily::SmNeg.into(), Sense::Min).map_err(err)?;
        let b = solve_mot(mu, nu, &CostFamily::SmPos.into(), Sense::Min).map_err(err)?;
        ensure(a.status == LpStatus::Optimal && b.status == LpStatus::Optimal, || format!("instance {k} not optimal"))?;
        let sa = a.coupling.support(1e-9);
        total_pts += sa.len();
        if let Some(v) = check_left_monotone(&sa) {
            return Err(format!("instance {k}: sm_neg support crosses at {v:?}"));
        }
        if let Some(v) = check_right_monotone(&b.coupling.support(1e-9)) {
            return Err(format!("instance {k}: sm_pos support crosses at {v:?}"));
        }
    }
    Ok(format!("100 instances, {total_pts} sm_neg support points"))
}

fn c4_finitely_monotone() -> Outcome {
    let mut subsets = 0;
    for (k, (mu, nu)) in instances_3_4().iter().enumerate() {
        let sol = solve_mot(mu, nu, &CostFamily::SmNeg.into(), Sense::Min).map_err(err)?;
        let v = is_finitely_monotone(&sol.coupling.support(1e-9), &CostFamily::SmNeg.into(), 4, 200, k as u64)
            .map_err(err)?;
        subsets += v.subsets_tested;
        if !v.monotone {
            return Err(format!("instance {k}: improving competitor, gap {:?}", v.certificate.map(|c| c.gap)));
        }
    }
    Ok(format!("{subsets} subsets certified"))
}

fn c5_symmetry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let inst = random_instance(&mut rng, 8, 10, true);
        for r in [mirror_pipeline(&inst.mu, &inst.nu).map_err(err)?, numeraire_pipeline(&inst.mu, &inst.nu).map_err(err)?] {
            ensure(r.value_gap <= 1e-9, || format!("instance {k} {}: value gap {:e}", r.transform, r.value_gap))?;
            ensure(r.support_bijection, || format!("instance {k} {}: supports differ", r.transform))?;
            worst = worst.max(r.value_gap);
        }
    }
    Ok(format!("20 instances x 2 pipelines, worst value gap {worst:.1e}"))
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn c6_preservation() -> Outcome {
    let sym = grid(-1.0, 1.0, 7);
    let pos = grid(0.5, 3.0, 7);
    let aff = TransformSpec::affine(2.0, 0.5).map_err(err)?;
    let num = TransformSpec::numeraire(1.0, 0.0, 1.0).map_err(err)?;
    for (spec, g) in [(&aff, &sym), (&num, &pos)] {
        let v = is_competitor_preserving(spec, g, g, 1000, 6, 1e-9).map_err(err)?;
        let n = v.canonical_pairs + v.random_pairs;
        ensure(v.preserving && n == 1000, || format!("{}: preserving {} on {n} pairs", spec.name(), v.preserving))?;
        ensure(v.max_residuals.iter().all(|&r| r < 1e-9), || {
            format!("{}: residuals {:?}", spec.name(), v.max_residuals)
        })?;
    }
    let base = grid(1.0, 2.0, 5);
    for map in nonconforming_corpus() {
        let xg: Vec<f64> = base.iter().map(|&x| map.forward(x, 1.5).unwrap().0).collect();
        let yg: Vec<f64> = base.iter().map(|&y| map.forward(1.5, y).unwrap().1).collect();
        let (mut xg, mut yg) = (xg, yg);
        xg.sort_by(f64::total_cmp);
        yg.sort_by(f64::total_cmp);
        let v = is_competitor_preserving(&map, &xg, &yg, 2000, 6, 1e-9).map_err(err)?;
        ensure(v.counterexample.is_some() && v.random_pairs == 0 && v.canonical_pairs <= 1000, || {
            format!("{}: no counterexample within 1000 canonical pairs", map.name())
        })?;
    }
    let box_aff = black_box(&TransformSpec::affine(3.0, -1.0).map_err(err)?, Domain::rect((-1.0, 1.0), (-1.0, 1.0)));
    let k = classify(&box_aff, &sym, &sym, 200, 1).map_err(err)?;
    let ok = k.case == Case::AffineCase
        && (k.param("a").unwrap_or(f64::NAN) - 3.0).abs() <= 1e-9
        && (k.param("b").unwrap_or(f64::NAN) + 1.0).abs() <= 1e-9;
    ensure(ok, || format!("affine classified as {:?} {:?}", k.case, k.params))?;
    let box_num = black_box(&TransformSpec::numeraire(2.0, 0.25, 1.5).map_err(err)?, Domain::rect((0.5, 3.0), (0.5, 3.0)));
    let k = classify(&box_num, &pos, &pos, 200, 1).map_err(err)?;
    let ok = k.case == Case::NumeraireCase
        && (k.param("a").unwrap_or(f64::NAN) - 2.0).abs() <= 1e-9
        && (k.param("b").unwrap_or(f64::NAN) - 0.25).abs() <= 1e-9
        && (k.param("c").unwrap_or(f64::NAN) - 1.5).abs() <= 1e-9;
    ensure(ok, || format!("numeraire classified as {:?} {:?}", k.case, k.params))?;
    Ok("2 x 1000 pairs preserved, 10/10 corpus maps refuted, parameters recovered".into())
}

/// Largest `|E[Y | X = x] − x|` over the columns of a coupling.
fn martingale_residual(q: &Coupling) -> f64 {
    q.columns()
        .iter()
        .map(|(x, col)| {
            let m: f64 = col.iter().map(|e| e.1).sum();
            (col.iter().map(|e| e.0 * e.1).sum::<f64>() / m - x).abs()
        })
        .fold(0.0, f64::max)
}

fn c7_martingale() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let pi = random_martingale_coupling(&mut rng, 6, 8, true);
        let a: f64 = rng.gen_range(0.5..3.0);
        let b: f64 = rng.gen_range(-1.0..1.0);
        let aff = TransformSpec::affine(a, b).map_err(err)?;
        let img = transform_measure(&aff, &pi).map_err(err)?;
        let v = img.is_martingale(1e-9);
        ensure(v.holds, || format!("coupling {k}: affine image not a martingale"))?;
        worst = worst.max(martingale_residual(&img));
        // Mass-normalized numeraire: c = 1/(mean − b).
        let mean = pi.marginals().0.barycenter().map_err(err)?;
        let nb: f64 = rng.gen_range(-1.0..0.1);
        let num = TransformSpec::numeraire(rng.gen_range(0.5..2.0), nb, 1.0 / (mean - nb)).map_err(err)?;
        let img = transform_measure(&num, &pi).map_err(err)?;
        let v = img.is_martingale(1e-9);
        ensure(v.holds, || format!("coupling {k}: numeraire image not a martingale"))?;
        worst = worst.max(martingale_residual(&img));
        let mass = numeraire_mass_check(&pi, &num).map_err(err)?;
        ensure(mass.is_probability && mass.mean_condition, || format!("coupling {k}: normalized mass {}", mass.total_mass))?;
        let off = TransformSpec::numeraire(1.0, nb, 1.3 / (mean - nb)).map_err(err)?;
        let mass = numeraire_mass_check(&pi, &off).map_err(err)?;
        ensure(!mass.is_probability && !mass.mean_condition, || format!("coupling {k}: off-mean mass {}", mass.total_mass))?;
    }
    Ok(format!("50 couplings, worst martingale residual {worst:.1e}"))
}

fn c8_right_barrier() -> Outcome {
    let (mu, nu, lat) = common::desk_right(8);
    let delta = lat.delta();
    let fit = fit_right_barrier(&mu, &nu, &lat).map_err(err)?;
    ensure(fit.embedding.truncated <= 1e-6, || format!("truncated mass {:e}", fit.embedding.truncated))?;
    let w1 = wasserstein1(&fit.embedding.law, &nu).map_err(err)?;
    ensure(w1 <= 2.0 * delta, || format!("embedded W1 {w1}"))?;
    let q = &fit.embedding.coupling;
    let viol = left_monotone_violation_mass(q, 1e-9);
    ensure(viol <= 0.01, || format!("left-monotone violation mass {viol}"))?;
    let lp = solve_mot(&mu, &nu, &CostFamily::SmNeg.into(), Sense::Min).map_err(err)?;
    let mut worst: f64 = 0.0;
    for &(x, _) in mu.atoms() {
        let a = q.conditional(x).ok_or("missing slice")?.normalized().map_err(err)?;
        let b = lp.coupling.conditional(x).ok_or("missing LP slice")?.normalized().map_err(err)?;
        worst = worst.max(wasserstein1(&a, &b).map_err(err)?);
    }
    ensure(worst <= 4.0 * delta, || format!("slice W1 {worst}"))?;
    Ok(format!(
        "{} sweeps, W1 {w1:.4}, violation {viol:.1e}, worst slice W1 {worst:.4}",
        fit.sweeps
    ))
}

fn c9_two_sided() -> Outcome {
    let (mu, nu, lat) = common::desk_right(9);
    let inner = fit_two_sided(&mu, &nu, &lat, TwoSided::Inner).map_err(err)?;
    let w_in = wasserstein1(&inner.embedding.law, &nu).map_err(err)?;
    let v_in = monotone_graphs_violation_mass(&inner.embedding.coupling, Direction::Increasing, 1e-9);
    ensure(w_in <= 2.0 * lat.delta() && v_in <= 0.01, || format!("inner W1 {w_in}, violation {v_in}"))?;
    let (mu, nu, lat) = common::desk_outer(9);
    let outer = fit_two_sided(&mu, &nu, &lat, TwoSided::Outer).map_err(err)?;
    let w_out = wasserstein1(&outer.embedding.law, &nu).map_err(err)?;
    let v_out = monotone_graphs_violation_mass(&outer.embedding.coupling, Direction::Decreasing, 1e-9);
    ensure(w_out <= 2.0 * lat.delta() && v_out <= 0.01, || format!("outer W1 {w_out}, violation {v_out}"))?;
    ensure(outer.dispersed == Some(true), || "outer instance not dispersed".into())?;
    Ok(format!("inner W1 {w_in:.4} viol {v_in:.1e}; outer W1 {w_out:.4} viol {v_out:.1e}"))
}

/// Right barrier `ψ = y − g(y)`: a path started at `x` stops once `g(B) ≥ x`.
fn corpus_barrier(delta: f64, flat: bool) -> (Barrier, DiscreteMeasure, Lattice) {
    let grid = Grid::covering(delta, -3.0, 3.0).unwrap();
    let g = |y: f64| {
        let a = if flat { (y.abs() - 0.5).max(0.0) } else { y.abs() };
        -a * a + a * a * a
    };
    let psi = grid.ys().iter().map(|&y| y - g(y)).collect();
    let barrier = Barrier::new(BarrierKind::Right, grid, psi, None).unwrap().with_exclude_time_zero(false);
    let lat = Lattice::new(grid, Lattice::DEFAULT_HORIZON, 10);
    let base = DiscreteMeasure::uniform_grid(-1.5, 1.5, (3.0 / delta).round() as usize + 1);
    let start = if flat {
        let mut atoms: Vec<(f64, f64)> = base.atoms().iter().map(|&(p, w)| (p, 0.7 * w)).collect();
        atoms.push((0.0, 0.3));
        DiscreteMeasure::from_atoms(atoms).unwrap()
    } else {
        base
    };
    let (mu, _) = lat.snap(&start).unwrap();
    (barrier, mu, lat)
}

fn c10_open_closed() -> Outcome {
    let mut line = Vec::new();
    for flat in [false, true] {
        let mut fr = Vec::new();
        for delta in [0.1, 0.05, 0.025] {
            let (b, mu, lat) = corpus_barrier(delta, flat);
            let r = compare_open_closed(&b, &mu, &lat, 10_000, 4.0 * delta).map_err(err)?;
            fr.push(r.fraction);
        }
        if flat {
            ensure(fr.iter().all(|&f| f >= 0.1), || format!("flat case fractions {fr:?}"))?;
        } else {
            ensure(fr.windows(2).all(|w| w[1] <= w[0]) && fr[2] <= 0.01, || format!("continuous case fractions {fr:?}"))?;
        }
        line.push(format!("{}: {:?}", if flat { "flat" } else { "continuous" }, fr));
    }
    Ok(line.join("; "))
}

fn c11_stop_go() -> Outcome {
    let lat = Lattice::new(Grid::covering(0.05, -1.0, 1.0).unwrap(), 1000, 11);
    let gamma = PathFunctional::TerminalCost {
        cost: CostFamily::SmNeg,
    };
    let configs = [
        (0.0, 1.0, 2.0, Sigma::FixedSteps { k: 25 }),
        (1.0, 0.0, 2.0, Sigma::FixedSteps { k: 25 }),
        (-1.0, 0.5, 0.0, Sigma::FixedSteps { k: 10 }),
        (0.2, 0.3, -1.0, Sigma::FixedSteps { k: 100 }),
        (-0.5, 1.5, 1.0, Sigma::FixedSteps { k: 1 }),
        (0.0, 2.0, 0.5, Sigma::FixedSteps { k: 64 }),
        (0.0, 1.0, 2.0, Sigma::ExitRadius { r: 0.25 }),
        (1.0, -1.0, 0.0, Sigma::ExitRadius { r: 0.5 }),
        (0.3, 0.9, -2.0, Sigma::ExitRadius { r: 0.1 }),
        (-2.0, 2.0, 1.0, Sigma::ExitRadius { r: 0.05 }),
    ];
    let mut worst: f64 = 0.0;
    for (k, (f0, g0, y, sigma)) in configs.into_iter().enumerate() {
        let f = StoppedPath { start: f0, end: y };
        let g = StoppedPath { start: g0, end: y };
        let lat = Lattice { seed: 100 + k as u64, ..lat };
        let r = check_stop_go(f, g, gamma, None, sigma, &lat, 10_000).map_err(err)?;
        let exact = (g0 - f0) * sigma.expected_time(lat.delta());
        ensure((r.gap - exact).abs() <= 1e-12, || format!("config {k}: exact gap {} vs {exact}", r.gap))?;
        let z = (r.mc_gap - exact).abs() / r.mc_stderr.max(1e-300);
        ensure(z <= 3.0 || r.mc_gap == exact, || format!("config {k}: MC {} ± {} vs {exact}", r.mc_gap, r.mc_stderr))?;
        worst = worst.max(if r.mc_gap == exact { 0.0 } else { z });
    }
    let r = check_stop_go(
        StoppedPath { start: 0.0, end: 2.0 },
        StoppedPath { start: 1.0, end: 2.0 },
        PathFunctional::AbsDiffNeg,
        Some(PathFunctional::AbsCubed),
        Sigma::ExitRadius { r: 0.5 },
        &lat,
        10_000,
    )
    .map_err(err)?;
    ensure(r.verdict == StopGo::Sg2, || format!("secondary configuration gave {:?}", r.verdict))?;
    Ok(format!("10 configs, worst |z| {worst:.2}; secondary gap {:.3}", r.gap2.unwrap_or(f64::NAN)))
}

fn c12_mirror() -> Outcome {
    let (mu, nu, lat) = common::desk_right(12);
    let fit = fit_right_barrier(&mu, &nu, &lat).map_err(err)?;
    let b = &fit.barrier;
    let spec = TransformSpec::mirror(true, false);
    let t = transform_barrier(&spec, b).map_err(err)?;
    ensure(t.kind == BarrierKind::Left, || format!("kind {:?}", t.kind))?;
    let g = b.grid();
    for (i, (&u, &v)) in b.psi_steps().iter().zip(t.psi_steps()).enumerate() {
        let expect = 2.0 * (g.k_lo + i as i64) as f64 - u;
        ensure(v == expect || (v.is_infinite() && v == expect), || format!("level {i}: {v} vs {expect}"))?;
    }
    ensure(&transform_barrier(&spec, &t).map_err(err)? == b, || "mirror twice differs".into())?;
    let mirrored = mu.map_positions(|x| -x);
    let a = embed(b, &mu, &lat).map_err(err)?.coupling;
    let c = embed(&t, &mirrored, &lat).map_err(err)?.coupling;
    let image = a.map_points(|x, y| (-x, y));
    ensure(image.len() == c.len(), || format!("{} vs {} atoms", image.len(), c.len()))?;
    let mut worst: f64 = 0.0;
    for (p, q) in image.entries().iter().zip(c.entries()) {
        ensure(p.0 == q.0 && p.1 == q.1, || format!("atom {p:?} vs {q:?}"))?;
        worst = worst.max((p.2 - q.2).abs());
    }
    ensure(worst <= 1e-12, || format!("per-atom difference {worst:e}"))?;
    Ok(format!("{} atoms, max difference {worst:.1e}", c.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 12] = [
        ("exact trivial MOT", Duration::from_secs(1), c1_trivial),
        ("derived LP instance vs vertex enumeration", Duration::from_secs(1), c2_derived),
        ("left/right-monotone optimizer supports", Duration::from_secs(60), c3_left_monotone),
        ("finitely monotone optimizer supports", Duration::from_secs(300), c4_finitely_monotone),
        ("mirror and numeraire pipelines", Duration::from_secs(60), c5_symmetry),
        ("competitor preservation and classification", Duration::from_secs(60), c6_preservation),
        ("martingale preservation and numeraire mass", Duration::from_secs(10), c7_martingale),
        ("right barrier fit", Duration::from_secs(300), c8_right_barrier),
        ("two-sided barrier fits", Duration::from_secs(300), c9_two_sided),
        ("open vs closed barriers", Duration::from_secs(300), c10_open_closed),
        ("stop-go closed form and secondary verdict", Duration::from_secs(120), c11_stop_go),
        ("barrier mirror identity", Duration::from_secs(60), c12_mirror),
    ];
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let out = run();
        let dt = t.elapsed();
        let out = match out {
            Ok(detail) if dt > budget => Err(format!("{detail}; over the {budget:?} budget")),
            other => other,
        };
        match out {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{:.2}s]", k + 1, dt.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{:.2}s]", k + 1, dt.as_secs_f64());
            }
        }
    }
    println!("{} of 12 criteria passed", 12 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
