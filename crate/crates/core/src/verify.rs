//! Named theorem checks over a computed spectrum. Each check is a trait
//! object registered under a stable name, selectable at run time, and maps
//! internal errors to an inconclusive status instead of aborting the run.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::eigen::{solve_pencil, PencilSolution};
use crate::error::{Error, Result};
use crate::linalg;
use crate::oscillation::locate_zeros;
use crate::problem::{BoundaryKind, RunConfig};
use crate::sturm::{
    admissible_sup, congruence_defect, kernel_correspondence, random_test_poly, sigma_solution,
    sl_negative_count, transform_pencil, AdmissibleSet,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// A hypothesis of the statement is not met by this instance.
    Skipped,
    /// The check could not measure what it needed (unconverged data,
    /// internal error); neither confirmed nor refuted.
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub status: CheckStatus,
    pub hypotheses: Value,
    pub witness: Value,
}

impl CheckOutcome {
    fn verdict(pass: bool, hypotheses: Value, witness: Value) -> Self {
        CheckOutcome {
            status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
            hypotheses,
            witness,
        }
    }

    fn skipped(hypotheses: Value, note: &str) -> Self {
        CheckOutcome {
            status: CheckStatus::Skipped,
            hypotheses,
            witness: json!({ "note": note }),
        }
    }

    fn inconclusive(hypotheses: Value, witness: Value) -> Self {
        CheckOutcome { status: CheckStatus::Inconclusive, hypotheses, witness }
    }
}

/// Everything a check may consume: the configured run, its solved spectrum,
/// optionally the solved opposite family on the same coefficients, the
/// admissible parameter range, and the seed for randomized probes.
pub struct VerifyContext {
    pub cfg: RunConfig,
    pub primary: PencilSolution,
    pub paired: Option<PencilSolution>,
    pub admissible: AdmissibleSet,
    pub seed: u64,
}

pub fn build_context(cfg: &RunConfig, pair: bool, seed: u64) -> Result<VerifyContext> {
    let primary = solve_pencil(&cfg.spec, &cfg.mesh, &cfg.tol)?;
    let paired = if pair {
        let other = cfg.spec.with_bc(cfg.spec.bc.other());
        Some(solve_pencil(&other, &cfg.mesh, &cfg.tol)?)
    } else {
        None
    };
    let admissible = admissible_sup(&cfg.spec.p, &cfg.mesh, cfg.tol.admissible_rel)?;
    Ok(VerifyContext { cfg: cfg.clone(), primary, paired, admissible, seed })
}

pub trait TheoremCheck {
    /// Stable identifier used for selection and in the report.
    fn name(&self) -> &'static str;
    fn run(&self, ctx: &VerifyContext) -> CheckOutcome;
}

/// Finite stand-in for ratios that can overflow to infinity; serde_json
/// would turn a non-finite float into null.
fn cap(v: f64) -> f64 {
    if v.is_finite() {
        v.min(1e300)
    } else {
        1e300
    }
}

fn guard(
    hypotheses: Value,
    body: impl FnOnce() -> Result<CheckOutcome>,
) -> CheckOutcome {
    match body() {
        Ok(outcome) => outcome,
        Err(e) => CheckOutcome::inconclusive(hypotheses, json!({ "error": e.to_string() })),
    }
}

/// Every eigenvalue of the negative branch lies inside the admissible set,
/// and for the mass-end family with stabilizing signs the first positive
/// one does too, with a zero-free ground mode.
struct AdmissibilityCheck;

impl TheoremCheck for AdmissibilityCheck {
    fn name(&self) -> &'static str {
        "admissibility"
    }

    fn run(&self, ctx: &VerifyContext) -> CheckOutcome {
        let spec = &ctx.primary.spec;
        let positive_part = spec.bc == BoundaryKind::ClampedMassEnd
            && spec.c > 0.0
            && spec.alpha >= 0.0;
        let hyp = json!({
            "family": spec.bc.label(),
            "c": spec.c,
            "alpha": spec.alpha,
            "positive_part_applicable": positive_part,
        });
        guard(hyp.clone(), || {
            let margin = ctx.cfg.tol.admissible_margin;
            let s = &ctx.primary.spectrum;
            let negatives_inside = s
                .negatives
                .iter()
                .take(s.converged_negatives)
                .all(|e| ctx.admissible.contains(e.lambda, margin));
            let mut witness = json!({
                "sup_lambda": ctx.admissible.sup_lambda,
                "sup_elements": ctx.admissible.elements,
                "converged_negatives": s.converged_negatives,
                "negatives_inside": negatives_inside,
            });
            let mut pass = negatives_inside;
            if positive_part {
                if s.converged_positives == 0 {
                    return Ok(CheckOutcome::inconclusive(
                        hyp,
                        json!({ "error": "first positive eigenvalue did not converge" }),
                    ));
                }
                let lambda1 = s.positives[0].lambda;
                let ef = ctx.primary.eigenfunction(1, ctx.cfg.samples)?;
                let zeros = locate_zeros(
                    &ef.interpolant,
                    ctx.cfg.samples,
                    ctx.cfg.tol.value_tol_rel,
                    ctx.cfg.tol.deriv_tol_rel,
                );
                let inside = ctx.admissible.contains(lambda1, margin);
                pass = pass && inside && zeros.zeros.is_empty();
                witness["lambda_1"] = json!(lambda1);
                witness["lambda_1_inside"] = json!(inside);
                witness["ground_mode_interior_zeros"] = json!(zeros.zeros.len());
            }
            Ok(CheckOutcome::verdict(pass, hyp.clone(), witness))
        })
    }
}

/// The size of the negative branch equals the number of negative directions
/// of the second-order form, with the count stable under mesh doubling.
struct NegativeCountCheck;

impl TheoremCheck for NegativeCountCheck {
    fn name(&self) -> &'static str {
        "negative_count"
    }

    fn run(&self, ctx: &VerifyContext) -> CheckOutcome {
        let spec = &ctx.primary.spec;
        let hyp = json!({
            "family": spec.bc.label(),
            "c": spec.c,
            "alpha": spec.alpha,
        });
        guard(hyp.clone(), || {
            let s = &ctx.primary.spectrum;
            let coarse = s.negatives.len();
            if coarse != s.refined_negatives {
                return Ok(CheckOutcome::inconclusive(
                    hyp,
                    json!({
                        "error": "negative count not stable under mesh doubling",
                        "coarse": coarse,
                        "refined": s.refined_negatives,
                    }),
                ));
            }
            // The floor on the reduced eigenvalues discards |lambda| beyond
            // 1/floor; counts this close to the window cannot be trusted.
            let window = 0.1 / s.mu_floor.max(f64::MIN_POSITIVE);
            if s.negatives.iter().any(|e| e.lambda.abs() >= window) {
                return Ok(CheckOutcome::inconclusive(
                    hyp,
                    json!({
                        "error": "negative eigenvalue magnitude near the reduction floor window",
                        "window": cap(window),
                    }),
                ));
            }
            let second_order =
                sl_negative_count(spec, &ctx.primary.mesh, ctx.cfg.tol.inertia_tau_rel);
            let witness = json!({
                "pencil_negatives": coarse,
                "refined_negatives": s.refined_negatives,
                "second_order_negatives": second_order,
                "floor_window": cap(window),
            });
            Ok(CheckOutcome::verdict(coarse == second_order, hyp.clone(), witness))
        })
    }
}

/// Negative eigenvalues are simple: pairwise separated in relative terms
/// and each with a one-dimensional kernel of the pencil matrix.
struct NegativeSimplicityCheck;

impl TheoremCheck for NegativeSimplicityCheck {
    fn name(&self) -> &'static str {
        "negative_simplicity"
    }

    fn run(&self, ctx: &VerifyContext) -> CheckOutcome {
        let spec = &ctx.primary.spec;
        let hyp = json!({
            "family": spec.bc.label(),
            "c": spec.c,
            "alpha": spec.alpha,
        });
        guard(hyp.clone(), || {
            let s = &ctx.primary.spectrum;
            if s.negatives.is_empty() {
                return Ok(CheckOutcome::verdict(
                    true,
                    hyp.clone(),
                    json!({ "checked": 0, "note": "no negative eigenvalues" }),
                ));
            }
            if s.converged_negatives == 0 {
                return Ok(CheckOutcome::inconclusive(
                    hyp,
                    json!({ "error": "negative branch did not converge" }),
                ));
            }
            let tol = &ctx.cfg.tol;
            let m = &ctx.primary.matrices;
            let mut min_rel_gap = f64::INFINITY;
            let lambdas: Vec<f64> = s
                .negatives
                .iter()
                .take(s.converged_negatives)
                .map(|e| e.lambda)
                .collect();
            for w in lambdas.windows(2) {
                let gap = (w[0] - w[1]).abs() / w[0].abs().max(w[1].abs());
                min_rel_gap = min_rel_gap.min(gap);
            }
            let mut entries = Vec::new();
            let mut pass = min_rel_gap >= tol.simplicity_gap_rel;
            for &lambda in &lambdas {
                let c = linalg::equilibrate_sym(&(&m.a - lambda * &m.b));
                let mut eigs = linalg::sym_eigenvalues_sorted(c);
                for e in &mut eigs {
                    *e = e.abs();
                }
                eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let norm = eigs[eigs.len() - 1];
                let tau = tol.inertia_tau_rel * norm;
                let dim = eigs.iter().filter(|&&e| e <= tau).count();
                let ratio = cap(eigs[1] / eigs[0].max(f64::MIN_POSITIVE));
                pass = pass && dim == 1 && ratio >= tol.kernel_ratio_min;
                entries.push(json!({
                    "lambda": lambda,
                    "kernel_dim": dim,
                    "separation_ratio": ratio,
                }));
            }
            let witness = json!({
                "checked": lambdas.len(),
                "min_rel_gap": cap(min_rel_gap),
                "eigenvalues": entries,
            });
            Ok(CheckOutcome::verdict(pass, hyp.clone(), witness))
        })
    }
}

/// The n-th negative eigenfunction has exactly n-1 interior zeros, all
/// simple, with the count stable under halving the dead band and consistent
/// with the inertia index just inside the eigenvalue.
struct ZeroCountsCheck;

impl TheoremCheck for ZeroCountsCheck {
    fn name(&self) -> &'static str {
        "zero_counts"
    }

    fn run(&self, ctx: &VerifyContext) -> CheckOutcome {
        let spec = &ctx.primary.spec;
        let signs_ok =
            spec.c < 0.0 && (spec.bc == BoundaryKind::ClampedClamped || spec.alpha <= 0.0);
        let hyp = json!({
            "family": spec.bc.label(),
            "c": spec.c,
            "alpha": spec.alpha,
            "requires": "c < 0 and alpha <= 0",
        });
        if !signs_ok {
            return CheckOutcome::skipped(hyp, "sign hypotheses not met by this instance");
        }
        guard(hyp.clone(), || {
            let s = &ctx.primary.spectrum;
            if s.negatives.is_empty() {
                return Ok(CheckOutcome::verdict(
                    true,
                    hyp.clone(),
                    json!({ "checked": 0, "note": "no negative eigenvalues" }),
                ));
            }
            if s.converged_negatives == 0 {
                return Ok(CheckOutcome::inconclusive(
                    hyp,
                    json!({ "error": "negative branch did not converge" }),
                ));
            }
            let tol = &ctx.cfg.tol;
            let count = s.converged_negatives.min(5);
            let mut entries = Vec::new();
            let mut pass = true;
            let mut flagged = false;
            for n in 1..=count {
                let ef = ctx.primary.eigenfunction(-(n as i32), ctx.cfg.samples)?;
                let zr = locate_zeros(
                    &ef.interpolant,
                    ctx.cfg.samples,
                    tol.value_tol_rel,
                    tol.deriv_tol_rel,
                );
                let tight = locate_zeros(
                    &ef.interpolant,
                    ctx.cfg.samples,
                    0.5 * tol.value_tol_rel,
                    tol.deriv_tol_rel,
                );
                let probe = if n == 1 {
                    0.5 * s.negatives[0].lambda
                } else {
                    0.5 * (s.negatives[n - 1].lambda + s.negatives[n - 2].lambda)
                };
                let inertia = ctx.primary.inertia(probe);
                // a near-singular probe cannot witness a miscount, only a
                // clean probe can
                flagged = flagged || inertia.near_singular;
                let all_simple = zr.zeros.iter().all(|z| z.simple);
                let ok = zr.zeros.len() == n - 1
                    && all_simple
                    && tight.zeros.len() == n - 1
                    && (inertia.near_singular || inertia.negative == n - 1);
                pass = pass && ok;
                entries.push(json!({
                    "index": -(n as i32),
                    "lambda": ef.lambda,
                    "interior_zeros": zr.zeros.len(),
                    "all_simple": all_simple,
                    "stable_under_tighter_band": tight.zeros.len() == n - 1,
                    "inertia_inside": inertia.negative,
                    "inertia_probe_flagged": inertia.near_singular,
                }));
            }
            let witness = json!({ "checked": count, "modes": entries });
            if pass && flagged {
                return Ok(CheckOutcome::inconclusive(hyp, witness));
            }
            Ok(CheckOutcome::verdict(pass, hyp.clone(), witness))
        })
    }
}

/// Negative eigenvalues of the two families interlace, the mass-end ones
/// closer to zero; for positive c and nonnegative end mass the first
/// buckling value of the mass-end family sits below the clamped one.
struct InterlacingCheck;

impl TheoremCheck for InterlacingCheck {
    fn name(&self) -> &'static str {
        "interlacing"
    }

    fn run(&self, ctx: &VerifyContext) -> CheckOutcome {
        let spec = &ctx.primary.spec;
        let hyp = json!({
            "c": spec.c,
            "alpha": spec.alpha,
            "requires": "paired run of the opposite family",
        });
        let Some(paired) = ctx.paired.as_ref() else {
            return CheckOutcome::skipped(hyp, "no paired family in this run");
        };
        guard(hyp.clone(), || {
            let (cc, me) = match ctx.primary.spec.bc {
                BoundaryKind::ClampedClamped => (&ctx.primary, paired),
                BoundaryKind::ClampedMassEnd => (paired, &ctx.primary),
            };
            let gap_tol = ctx.cfg.tol.interlace_gap_rel;
            let sep = |a: f64, b: f64| (a - b) / a.abs().max(b.abs()).max(1.0);

            let sn = &cc.spectrum;
            let sm = &me.spectrum;
            let depth = sn.converged_negatives.min(sm.converged_negatives);
            let mut chain = Vec::new();
            let mut pass = true;
            for n in 0..depth {
                let l_cc = sn.negatives[n].lambda;
                let l_me = sm.negatives[n].lambda;
                // mass-end n-th sits between the clamped n-th and zero
                let upper = sep(l_me, l_cc) >= gap_tol;
                let lower = match sm.negatives.get(n + 1) {
                    Some(next) if n + 1 < sm.converged_negatives => {
                        Some(sep(l_cc, next.lambda) >= gap_tol)
                    }
                    _ => None,
                };
                pass = pass && upper && lower.unwrap_or(true);
                chain.push(json!({
                    "n": n + 1,
                    "clamped": l_cc,
                    "mass_end": l_me,
                    "mass_end_above": upper,
                    "next_mass_end_below": lower,
                }));
            }
            let mut checked = depth;
            let mut witness = json!({ "negative_pairs": chain });
            if spec.c > 0.0 && spec.alpha >= 0.0 {
                if sn.converged_positives >= 1 && sm.converged_positives >= 1 {
                    let b_cc = sn.positives[0].lambda;
                    let b_me = sm.positives[0].lambda;
                    let ok = sep(b_cc, b_me) >= gap_tol;
                    pass = pass && ok;
                    checked += 1;
                    witness["first_buckling"] = json!({
                        "clamped": b_cc,
                        "mass_end": b_me,
                        "mass_end_below": ok,
                    });
                } else {
                    return Ok(CheckOutcome::inconclusive(
                        hyp,
                        json!({ "error": "first buckling values did not converge" }),
                    ));
                }
            }
            if checked == 0 {
                return Ok(CheckOutcome::skipped(
                    hyp.clone(),
                    "no comparable eigenvalue pairs in this instance",
                ));
            }
            Ok(CheckOutcome::verdict(pass, hyp.clone(), witness))
        })
    }
}

/// The substitution transport preserves the quadratic form on random test
/// functions, and at a computed eigenvalue the transported model matrix is
/// numerically singular.
struct TransformCongruenceCheck;

impl TheoremCheck for TransformCongruenceCheck {
    fn name(&self) -> &'static str {
        "transform_congruence"
    }

    fn run(&self, ctx: &VerifyContext) -> CheckOutcome {
        let spec = &ctx.primary.spec;
        let hyp = json!({
            "family": spec.bc.label(),
            "sup_lambda": ctx.admissible.sup_lambda,
            "requires": "probe parameter inside the admissible set",
        });
        guard(hyp.clone(), || {
            let s = &ctx.primary.spectrum;
            let (probe, from_spectrum) = if s.converged_negatives >= 1 {
                (s.negatives[0].best_estimate(), true)
            } else {
                (-1.0, false)
            };
            let tol = &ctx.cfg.tol;
            let profile = sigma_solution(&spec.p, probe, &ctx.admissible, tol)?;
            let model = transform_pencil(spec, probe, &profile)?;
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            let mut max_defect = 0.0f64;
            for _ in 0..20 {
                let y = random_test_poly(spec.bc, &mut rng);
                let sample = congruence_defect(spec, &profile, &model, &y);
                max_defect = max_defect.max(sample.defect);
            }
            let congruent = max_defect <= tol.congruence_tol;
            let mut pass = congruent;
            let mut witness = json!({
                "probe": probe,
                "probe_from_spectrum": from_spectrum,
                "omega": profile.omega,
                "min_sigma": profile.min_sigma,
                "profile_residual": profile.fd_residual,
                "max_congruence_defect": max_defect,
                "test_functions": 20,
            });
            if from_spectrum {
                let kw = kernel_correspondence(spec, &ctx.primary.mesh, probe, &ctx.admissible, tol)?;
                let singular = kw.sv_ratio <= tol.model_kernel_tol;
                pass = pass && singular;
                witness["kernel_sv_ratio"] = json!(cap(kw.sv_ratio));
                witness["kernel_slot_drift"] = json!(cap(kw.slot_drift));
                witness["kernel_singular"] = json!(singular);
            }
            Ok(CheckOutcome::verdict(pass, hyp.clone(), witness))
        })
    }
}

/// The named checks, in reporting order.
pub struct CheckRegistry {
    checks: Vec<Box<dyn TheoremCheck>>,
}

impl CheckRegistry {
    pub fn standard() -> Self {
        CheckRegistry {
            checks: vec![
                Box::new(AdmissibilityCheck),
                Box::new(NegativeCountCheck),
                Box::new(NegativeSimplicityCheck),
                Box::new(ZeroCountsCheck),
                Box::new(InterlacingCheck),
                Box::new(TransformCongruenceCheck),
            ],
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.checks.iter().map(|c| c.name()).collect()
    }

    /// Registry-ordered selection; every requested name must exist.
    pub fn select(&self, only: Option<&[String]>) -> Result<Vec<&dyn TheoremCheck>> {
        match only {
            None => Ok(self.checks.iter().map(|c| c.as_ref()).collect()),
            Some(names) => {
                for n in names {
                    if !self.checks.iter().any(|c| c.name() == n) {
                        return Err(Error::Config(format!(
                            "unknown check '{n}'; available: {}",
                            self.names().join(", ")
                        )));
                    }
                }
                Ok(self
                    .checks
                    .iter()
                    .map(|c| c.as_ref())
                    .filter(|c| names.iter().any(|n| n == c.name()))
                    .collect())
            }
        }
    }
}

#[derive(Serialize)]
pub struct ReportMeta {
    pub bc: String,
    pub mesh_elements: usize,
    pub samples: usize,
    pub seed: u64,
    pub paired: bool,
    pub tolerances: crate::problem::Tolerances,
    /// Seconds per executed check; the one run-to-run varying field.
    pub timings: BTreeMap<String, f64>,
}

#[derive(Serialize)]
pub struct TheoremEntry {
    pub name: String,
    pub status: CheckStatus,
    pub hypotheses: Value,
    pub witness: Value,
}

#[derive(Serialize)]
pub struct TheoremReport {
    pub meta: ReportMeta,
    pub theorems: Vec<TheoremEntry>,
}

impl TheoremReport {
    /// 2 when any check failed, otherwise 0; skipped and inconclusive
    /// entries do not fail the run.
    pub fn exit_code(&self) -> i32 {
        if self.theorems.iter().any(|t| t.status == CheckStatus::Fail) {
            2
        } else {
            0
        }
    }
}

pub fn run_verification(ctx: &VerifyContext, only: Option<&[String]>) -> Result<TheoremReport> {
    let registry = CheckRegistry::standard();
    let selected = registry.select(only)?;
    let mut timings = BTreeMap::new();
    let mut theorems = Vec::new();
    for check in selected {
        let start = Instant::now();
        let outcome = check.run(ctx);
        timings.insert(check.name().to_string(), start.elapsed().as_secs_f64());
        theorems.push(TheoremEntry {
            name: check.name().to_string(),
            status: outcome.status,
            hypotheses: outcome.hypotheses,
            witness: outcome.witness,
        });
    }
    Ok(TheoremReport {
        meta: ReportMeta {
            bc: ctx.primary.spec.bc.label().to_string(),
            mesh_elements: ctx.cfg.mesh.n_elements(),
            samples: ctx.cfg.samples,
            seed: ctx.seed,
            paired: ctx.paired.is_some(),
            tolerances: ctx.cfg.tol.clone(),
            timings,
        },
        theorems,
    })
}
