//! End-to-end acceptance checks against closed-form oracles. Every
//! criterion prints one pass/fail line; the test fails at the end if any
//! criterion failed or overran its time budget.

use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pencil_core::eigen::{solve_pencil, PencilSolution};
use pencil_core::linalg;
use pencil_core::oscillation::{
    disconjugacy_check, locate_zeros, random_forward_state, random_positive_poly,
    signchange_noninc_check, ConeDirection, ConeState,
};
use pencil_core::problem::{
    BoundaryKind, CoefficientField, Mesh, ProblemSpec, RunConfig, Tolerances, DEFAULT_SAMPLES,
};
use pencil_core::sturm::{
    admissible_sup, congruence_defect, kernel_correspondence, poly_eval, random_test_poly,
    sigma_solution, sl_negative_count, transform_pencil,
};
use pencil_core::verify::{build_context, run_verification};

fn one() -> CoefficientField {
    CoefficientField::constant(1.0)
}

fn unit_spec(bc: BoundaryKind, c: f64, alpha: f64) -> ProblemSpec {
    ProblemSpec::new(one(), one(), c, alpha, bc).unwrap()
}

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Smallest two positive roots of 2 - 2 cos(m) - m sin(m) = 0, squared:
/// the clamped buckling values. The first root is exactly 2 pi.
fn buckling_roots() -> (f64, f64) {
    let g = |m: f64| 2.0 - 2.0 * m.cos() - m * m.sin();
    let bisect = |mut lo: f64, mut hi: f64| {
        assert!(g(lo) * g(hi) < 0.0, "oracle bracket");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(lo) * g(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let m1 = bisect(6.0, 6.5);
    let m2 = bisect(8.5, 9.5);
    (m1 * m1, m2 * m2)
}

/// Dirichlet count #{ k^2 pi^2 < |c| } for the clamped family.
fn dirichlet_count(c: f64) -> usize {
    (1..).take_while(|&k| (k as f64 * PI).powi(2) < c.abs()).count()
}

/// Mixed count #{ (k - 1/2)^2 pi^2 < |c| } for the mass-end family at
/// alpha = 0.
fn mixed_count(c: f64) -> usize {
    (1..)
        .take_while(|&k| ((k as f64 - 0.5) * PI).powi(2) < c.abs())
        .count()
}

/// Uniform mesh whose first and last elements are split geometrically
/// toward the endpoints. The trial space pins endpoint slopes, and undoing
/// a unit end slope costs about 2h/15 of gradient energy in the end element
/// of width h; on a uniform mesh that tax can flip a count whose analytic
/// margin is small (c = -200, mass end: margin 0.14 vs tax 53h). Grading
/// the ends makes the tax negligible without refining globally.
fn end_graded_mesh(core: usize, levels: i32) -> Mesh {
    let h = 1.0 / core as f64;
    let mut nodes = vec![0.0];
    nodes.extend((1..=levels).rev().map(|j| h / f64::powi(2.0, j)));
    nodes.extend((1..core).map(|k| k as f64 * h));
    nodes.extend((1..=levels).map(|j| 1.0 - h / f64::powi(2.0, j)));
    nodes.push(1.0);
    Mesh::from_nodes(nodes).expect("graded nodes are sorted")
}

struct CountInstance {
    c: f64,
    bc: BoundaryKind,
    expected: usize,
    solve_seconds: f64,
    sol: PencilSolution,
}

static COUNT_INSTANCES: OnceLock<Vec<CountInstance>> = OnceLock::new();

/// The eight counting instances, solved once on a shared end-graded mesh
/// (shared so the two families nest dof-wise, which keeps their interlacing
/// exact) and reused by the criteria that revisit them.
fn count_instances() -> &'static [CountInstance] {
    COUNT_INSTANCES.get_or_init(|| {
        let mesh = end_graded_mesh(96, 4);
        let tol = Tolerances::default();
        let mut out = Vec::new();
        for &c in &[-20.0, -50.0, -200.0, -500.0] {
            for bc in [BoundaryKind::ClampedClamped, BoundaryKind::ClampedMassEnd] {
                let expected = match bc {
                    BoundaryKind::ClampedClamped => dirichlet_count(c),
                    BoundaryKind::ClampedMassEnd => mixed_count(c),
                };
                let spec = unit_spec(bc, c, 0.0);
                let start = Instant::now();
                let sol = solve_pencil(&spec, &mesh, &tol).expect("count instance solves");
                out.push(CountInstance {
                    c,
                    bc,
                    expected,
                    solve_seconds: start.elapsed().as_secs_f64(),
                    sol,
                });
            }
        }
        out
    })
}

fn criterion_admissible_supremum() -> Result<String, String> {
    let adm = admissible_sup(&one(), &Mesh::uniform(128), 1e-6).map_err(s)?;
    let pi2 = PI * PI;
    let rel = (adm.sup_lambda - pi2).abs() / pi2;
    if rel <= 1e-6 {
        Ok(format!("sup {:.9} vs pi^2, rel err {rel:.2e}", adm.sup_lambda))
    } else {
        Err(format!("sup {} off pi^2 by rel {rel:.2e}", adm.sup_lambda))
    }
}

fn criterion_buckling_values() -> Result<String, String> {
    let (l1, l2) = buckling_roots();
    let four_pi2 = 4.0 * PI * PI;
    if (l1 - four_pi2).abs() > 1e-9 * four_pi2 {
        return Err(format!("oracle self-check: first root {l1} is not 4 pi^2"));
    }
    let spec = unit_spec(BoundaryKind::ClampedClamped, 0.0, 0.0);
    let sol = solve_pencil(&spec, &Mesh::uniform(64), &Tolerances::default()).map_err(s)?;
    if sol.spectrum.positives.len() < 2 {
        return Err("fewer than two buckling values".into());
    }
    let got1 = sol.spectrum.positives[0].lambda;
    let got2 = sol.spectrum.positives[1].lambda;
    let (r1, r2) = ((got1 - l1).abs() / l1, (got2 - l2).abs() / l2);
    if r1 <= 1e-4 && r2 <= 1e-4 {
        Ok(format!(
            "lambda_1 {got1:.6} (4 pi^2), lambda_2 {got2:.6} vs {l2:.6}, rel {r1:.1e}/{r2:.1e}"
        ))
    } else {
        Err(format!("rel errors {r1:.2e}, {r2:.2e} exceed 1e-4"))
    }
}

fn criterion_negative_counts() -> Result<String, String> {
    let mut worst = 0.0f64;
    for inst in count_instances() {
        let got = inst.sol.spectrum.negatives.len();
        if got != inst.expected {
            return Err(format!(
                "c={} {}: {} negatives, expected {}",
                inst.c,
                inst.bc.label(),
                got,
                inst.expected
            ));
        }
        let cross = sl_negative_count(&inst.sol.spec, &inst.sol.mesh, 1e-10);
        if cross != inst.expected {
            return Err(format!(
                "c={} {}: second-order count {} disagrees with {}",
                inst.c,
                inst.bc.label(),
                cross,
                inst.expected
            ));
        }
        worst = worst.max(inst.solve_seconds);
    }
    if worst > 5.0 {
        return Err(format!("slowest instance took {worst:.2}s (> 5s)"));
    }
    Ok(format!(
        "8 instances match closed-form counts; slowest solve {worst:.2}s"
    ))
}

fn criterion_zero_counts() -> Result<String, String> {
    let tol = Tolerances::default();
    let mesh = Mesh::uniform(128);
    for (bc, alpha) in [
        (BoundaryKind::ClampedClamped, 0.0),
        (BoundaryKind::ClampedMassEnd, -1.0),
    ] {
        let spec = unit_spec(bc, -500.0, alpha);
        let start = Instant::now();
        let sol = solve_pencil(&spec, &mesh, &tol).map_err(s)?;
        if sol.spectrum.converged_negatives < 5 {
            return Err(format!(
                "{}: only {} validated negatives",
                bc.label(),
                sol.spectrum.converged_negatives
            ));
        }
        for n in 1..=5usize {
            let ef = sol.eigenfunction(-(n as i32), DEFAULT_SAMPLES).map_err(s)?;
            let zr = locate_zeros(&ef.interpolant, DEFAULT_SAMPLES, tol.value_tol_rel, tol.deriv_tol_rel);
            let halved = locate_zeros(
                &ef.interpolant,
                DEFAULT_SAMPLES,
                0.5 * tol.value_tol_rel,
                tol.deriv_tol_rel,
            );
            if zr.zeros.len() != n - 1 || halved.zeros.len() != n - 1 {
                return Err(format!(
                    "{} mode -{n}: {} zeros ({} at halved band), expected {}",
                    bc.label(),
                    zr.zeros.len(),
                    halved.zeros.len(),
                    n - 1
                ));
            }
            if !zr.zeros.iter().all(|z| z.simple) {
                return Err(format!("{} mode -{n}: non-simple zero", bc.label()));
            }
        }
        let dt = start.elapsed().as_secs_f64();
        if dt > 10.0 {
            return Err(format!("{} instance took {dt:.2}s (> 10s)", bc.label()));
        }
    }
    Ok("modes -1..-5 of both families show 0..4 simple zeros, stable under halved band".into())
}

fn criterion_simplicity() -> Result<String, String> {
    let mut min_gap = f64::INFINITY;
    let mut checked = 0usize;
    for inst in count_instances() {
        let spectrum = &inst.sol.spectrum;
        let m = &inst.sol.matrices;
        let lambdas: Vec<f64> = spectrum
            .negatives
            .iter()
            .take(spectrum.converged_negatives)
            .map(|e| e.lambda)
            .collect();
        for w in lambdas.windows(2) {
            let gap = (w[0] - w[1]).abs() / w[0].abs().max(w[1].abs());
            min_gap = min_gap.min(gap);
            if gap < 1e-6 {
                return Err(format!(
                    "c={} {}: relative gap {gap:.2e} below 1e-6",
                    inst.c,
                    inst.bc.label()
                ));
            }
        }
        for &lambda in &lambdas {
            let pencil = linalg::equilibrate_sym(&(&m.a - lambda * &m.b));
            let eigs = linalg::sym_eigenvalues_sorted(pencil);
            let norm = eigs[0].abs().max(eigs[eigs.len() - 1].abs());
            let tau = 1e-10 * norm;
            let dim = eigs.iter().filter(|&&e| e.abs() <= tau).count();
            if dim != 1 {
                return Err(format!(
                    "c={} {}: kernel dimension {dim} at lambda={lambda}",
                    inst.c,
                    inst.bc.label()
                ));
            }
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} eigenvalues all simple; min relative gap {min_gap:.2e}"
    ))
}

fn criterion_interlacing() -> Result<String, String> {
    let sep = |a: f64, b: f64| (a - b) / a.abs().max(b.abs()).max(1.0);
    let find = |c: f64, bc: BoundaryKind| {
        count_instances()
            .iter()
            .find(|i| i.c == c && i.bc == bc)
            .expect("cached instance")
    };
    let cc = &find(-500.0, BoundaryKind::ClampedClamped).sol.spectrum;
    let me = &find(-500.0, BoundaryKind::ClampedMassEnd).sol.spectrum;
    if cc.negatives.len() < 6 || me.negatives.len() < 7 {
        return Err("not enough negative eigenvalues for a depth-6 chain".into());
    }
    for n in 0..6 {
        let l_cc = cc.negatives[n].lambda;
        let l_me = me.negatives[n].lambda;
        let l_me_next = me.negatives[n + 1].lambda;
        if sep(l_me, l_cc) < 1e-8 || sep(l_cc, l_me_next) < 1e-8 {
            return Err(format!(
                "chain breaks at n={}: {l_me_next} < {l_cc} < {l_me} violated",
                n + 1
            ));
        }
    }

    let tol = Tolerances::default();
    let mesh = Mesh::uniform(64);
    let b_cc = solve_pencil(&unit_spec(BoundaryKind::ClampedClamped, 5.0, 1.0), &mesh, &tol)
        .map_err(s)?;
    let b_me = solve_pencil(&unit_spec(BoundaryKind::ClampedMassEnd, 5.0, 1.0), &mesh, &tol)
        .map_err(s)?;
    let (p_cc, p_me) = (
        b_cc.spectrum.positives[0].lambda,
        b_me.spectrum.positives[0].lambda,
    );
    if sep(p_cc, p_me) < 1e-8 {
        return Err(format!("first buckling {p_me} not below clamped {p_cc}"));
    }
    Ok(format!(
        "depth-6 negative chain interlaces; first buckling {p_me:.4} < {p_cc:.4}"
    ))
}

fn criterion_transform_congruence() -> Result<String, String> {
    let tol = Tolerances::default();
    let mesh = Mesh::uniform(64);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut max_defect = 0.0f64;
    let mut max_sv = 0.0f64;
    let mut kernels = 0usize;
    for k in 0..10 {
        let bc = if k % 2 == 0 {
            BoundaryKind::ClampedClamped
        } else {
            BoundaryKind::ClampedMassEnd
        };
        let alpha = if bc == BoundaryKind::ClampedMassEnd {
            rng.gen_range(-1.0..1.0)
        } else {
            0.0
        };
        let c = rng.gen_range(-150.0..-50.0);
        let p = random_positive_poly(&mut rng);
        let r = random_positive_poly(&mut rng);
        let spec = ProblemSpec::new(p, r, c, alpha, bc).map_err(s)?;
        let adm = admissible_sup(&spec.p, &mesh, 1e-6).map_err(s)?;
        for probe in [-10.0, -1.0, 0.5 * adm.sup_lambda] {
            let profile = sigma_solution(&spec.p, probe, &adm, &tol).map_err(s)?;
            let model = transform_pencil(&spec, probe, &profile).map_err(s)?;
            for _ in 0..20 {
                let y = random_test_poly(spec.bc, &mut rng);
                let sample = congruence_defect(&spec, &profile, &model, &y);
                max_defect = max_defect.max(sample.defect);
                if sample.defect > 1e-6 {
                    return Err(format!(
                        "instance {k} probe {probe}: defect {:.2e}",
                        sample.defect
                    ));
                }
            }
        }
        let sol = solve_pencil(&spec, &mesh, &tol).map_err(s)?;
        if sol.spectrum.converged_negatives >= 1 {
            let probe = sol.spectrum.negatives[0].best_estimate();
            let kw = kernel_correspondence(&spec, &mesh, probe, &adm, &tol).map_err(s)?;
            max_sv = max_sv.max(kw.sv_ratio);
            if kw.sv_ratio > 1e-6 {
                return Err(format!(
                    "instance {k}: model sv ratio {:.2e} at lambda_-1",
                    kw.sv_ratio
                ));
            }
            kernels += 1;
        }
    }
    if kernels == 0 {
        return Err("no instance produced a validated negative eigenvalue".into());
    }
    Ok(format!(
        "600 identities, max defect {max_defect:.2e}; {kernels} kernel probes, max sv {max_sv:.2e}"
    ))
}

fn criterion_inertia_steps() -> Result<String, String> {
    // buckling instance: counts step through the positive branch
    let spec = unit_spec(BoundaryKind::ClampedClamped, 0.0, 0.0);
    let sol = solve_pencil(&spec, &Mesh::uniform(64), &Tolerances::default()).map_err(s)?;
    let pos: Vec<f64> = sol
        .spectrum
        .positives
        .iter()
        .take(sol.spectrum.converged_positives.min(4))
        .map(|e| e.lambda)
        .collect();
    if pos.len() < 3 {
        return Err("fewer than three validated buckling values".into());
    }
    let mut probes = 0usize;
    let mut prev = 0.0;
    for (k, &l) in pos.iter().enumerate() {
        for frac in [1.0 / 3.0, 2.0 / 3.0] {
            let ind = sol.inertia(prev + frac * (l - prev));
            if ind.negative != k {
                return Err(format!(
                    "buckling: index {} at probe below lambda_{}, expected {k}",
                    ind.negative,
                    k + 1
                ));
            }
            probes += 1;
        }
        prev = l;
    }

    // counting instances: constant between negatives, +1 across each
    for inst in count_instances() {
        let neg: Vec<f64> = inst
            .sol
            .spectrum
            .negatives
            .iter()
            .take(inst.sol.spectrum.converged_negatives.min(4))
            .map(|e| e.lambda)
            .collect();
        let mut prev = 0.0;
        for (k, &l) in neg.iter().enumerate() {
            for frac in [1.0 / 3.0, 2.0 / 3.0] {
                let ind = inst.sol.inertia(prev + frac * (l - prev));
                if ind.negative != k {
                    return Err(format!(
                        "c={} {}: index {} between lambda_-{k} and lambda_-{}, expected {k}",
                        inst.c,
                        inst.bc.label(),
                        ind.negative,
                        k + 1
                    ));
                }
                probes += 1;
            }
            prev = l;
        }
    }
    Ok(format!(
        "index constant between and steps by one across both branches ({probes} probes)"
    ))
}

fn criterion_cone_positivity() -> Result<String, String> {
    let state = ConeState {
        a: 0.0,
        y: 0.0,
        dy: 0.0,
        v: 0.0,
        dv: 1.0,
        direction: ConeDirection::Forward,
    };
    let ck = disconjugacy_check(&one(), &one(), &state, 1e-4).map_err(s)?;
    let exact = (1f64.sinh() - 1f64.sin()) / 2.0;
    let err = (ck.endpoint[0] - exact).abs();
    if err > 1e-8 {
        return Err(format!("oracle endpoint off by {err:.2e}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let step = Tolerances::default().cone_step;
    for pair in 0..10 {
        let p = random_positive_poly(&mut rng);
        let r = random_positive_poly(&mut rng);
        for trial in 0..100 {
            let st = random_forward_state(&mut rng);
            let ck = disconjugacy_check(&p, &r, &st, step).map_err(s)?;
            if !ck.strict {
                return Err(format!(
                    "pair {pair} trial {trial}: endpoint {:?} not strictly positive",
                    ck.endpoint
                ));
            }
        }
    }
    Ok(format!(
        "1000 random cone states stay strictly positive; oracle err {err:.1e}"
    ))
}

fn criterion_signchange_nonincrease() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let mesh = Mesh::uniform(48);
    let mut trials = 0usize;
    for (bc, alpha) in [
        (BoundaryKind::ClampedClamped, 0.0),
        (BoundaryKind::ClampedMassEnd, 0.0),
        (BoundaryKind::ClampedMassEnd, 1.0),
    ] {
        for _ in 0..50 {
            let coeffs: Vec<f64> = (0..13).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (ck, _) = signchange_noninc_check(
                &one(),
                &one(),
                alpha,
                bc,
                &mesh,
                |x| poly_eval(&coeffs, x),
                DEFAULT_SAMPLES,
                1e-9,
            )
            .map_err(s)?;
            if !ck.pass {
                return Err(format!(
                    "{} alpha={alpha}: {} changes in, {} out",
                    bc.label(),
                    ck.input_changes,
                    ck.output_changes
                ));
            }
            trials += 1;
        }
    }
    Ok(format!("{trials} random loads never gained sign changes"))
}

fn criterion_determinism() -> Result<String, String> {
    let cfg = RunConfig {
        spec: unit_spec(BoundaryKind::ClampedClamped, -200.0, 0.0),
        mesh: Mesh::uniform(64),
        samples: DEFAULT_SAMPLES,
        tol: Tolerances::default(),
    };
    let run = || -> Result<String, String> {
        let ctx = build_context(&cfg, true, 42).map_err(s)?;
        let report = run_verification(&ctx, None).map_err(s)?;
        let mut v = serde_json::to_value(&report).map_err(s)?;
        v["meta"]
            .as_object_mut()
            .ok_or("meta not an object")?
            .remove("timings")
            .ok_or("timings field missing")?;
        serde_json::to_string(&v).map_err(s)
    };
    let first = run()?;
    let second = run()?;
    if first == second {
        Ok(format!(
            "paired verification reports identical ({} bytes modulo timings)",
            first.len()
        ))
    } else {
        Err("repeated verification reports differ".into())
    }
}

#[test]
fn acceptance_criteria() {
    let criteria: Vec<(
        &str,
        Option<f64>,
        Box<dyn FnOnce() -> Result<String, String>>,
    )> = vec![
        ("admissible-supremum", Some(1.0), Box::new(criterion_admissible_supremum)),
        ("buckling-values", Some(2.0), Box::new(criterion_buckling_values)),
        ("negative-counts", None, Box::new(criterion_negative_counts)),
        ("zero-counts", None, Box::new(criterion_zero_counts)),
        ("simplicity", None, Box::new(criterion_simplicity)),
        ("interlacing", None, Box::new(criterion_interlacing)),
        ("transform-congruence", None, Box::new(criterion_transform_congruence)),
        ("inertia-steps", None, Box::new(criterion_inertia_steps)),
        ("cone-positivity", None, Box::new(criterion_cone_positivity)),
        ("signchange-nonincrease", None, Box::new(criterion_signchange_nonincrease)),
        ("determinism", None, Box::new(criterion_determinism)),
    ];

    let mut failures = Vec::new();
    for (i, (name, budget, body)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = body();
        let dt = start.elapsed().as_secs_f64();
        let over = budget.map(|b| dt > b).unwrap_or(false);
        let (status, detail) = match (result, over) {
            (Ok(d), false) => ("pass", d),
            (Ok(d), true) => (
                "FAIL",
                format!("{d}; exceeded {:.0}s budget at {dt:.2}s", budget.unwrap()),
            ),
            (Err(e), _) => ("FAIL", e),
        };
        println!("criterion {:02} {name:<24} {status}  [{dt:6.2}s]  {detail}", i + 1);
        if status == "FAIL" {
            failures.push(format!("{:02} {name}: {detail}", i + 1));
        }
    }
    assert!(
        failures.is_empty(),
        "failed acceptance criteria:\n{}",
        failures.join("\n")
    );
}
