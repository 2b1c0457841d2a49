//! Second-order machinery: the admissible parameter set, the positive
//! one-sided solution sigma built from two initial-value problems, the
//! change of variables carrying the pencil to a model problem with
//! transported coefficients, and negative counts of the second-order forms.

use rand::Rng;

use crate::assembly::{self, assemble_model, SecondOrderSpace};
use crate::eigen::reduce_pair;
use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{BoundaryKind, CoefficientField, Mesh, ProblemSpec, Tolerances};

/// Open half-line of parameters for which the one-sided solutions stay
/// positive: everything strictly below `sup_lambda`.
#[derive(Clone, Copy, Debug)]
pub struct AdmissibleSet {
    pub sup_lambda: f64,
    /// Elements of the mesh that met the refinement target.
    pub elements: usize,
}

impl AdmissibleSet {
    pub fn contains(&self, lambda: f64, margin: f64) -> bool {
        lambda <= self.sup_lambda - margin * self.sup_lambda.abs().max(1.0)
    }
}

fn smallest_dirichlet_eigenvalue(p: &CoefficientField, mesh: &Mesh) -> Result<f64> {
    let one = CoefficientField::constant(1.0);
    let forms = assembly::assemble_second_order(
        Some(p),
        Some(&one),
        SecondOrderSpace::DirichletBoth,
        mesh,
    );
    let lm = linalg::cholesky_lower(&forms.mass, "mass matrix")?;
    let x = linalg::solve_lower(&lm, &forms.grad);
    let w = linalg::solve_lower(&lm, &x.transpose());
    let w = 0.5 * (&w + w.transpose());
    Ok(linalg::sym_eigenvalues_sorted(w)[0])
}

/// Supremum of the admissible set: the smallest Dirichlet eigenvalue of the
/// gradient form of p, refined by mesh doubling to the relative target.
pub fn admissible_sup(p: &CoefficientField, mesh: &Mesh, rel_tol: f64) -> Result<AdmissibleSet> {
    let mut mesh = mesh.clone();
    let mut prev: Option<f64> = None;
    for _ in 0..12 {
        let nu = smallest_dirichlet_eigenvalue(p, &mesh)?;
        if let Some(pv) = prev {
            if (nu - pv).abs() <= rel_tol * nu.abs() {
                return Ok(AdmissibleSet { sup_lambda: nu, elements: mesh.n_elements() });
            }
        }
        prev = Some(nu);
        mesh = mesh.refine_double();
    }
    Err(Error::RefinementStalled("admissible supremum"))
}

fn rk4_step2(
    x: f64,
    y: [f64; 2],
    h: f64,
    f: &impl Fn(f64, [f64; 2]) -> [f64; 2],
) -> [f64; 2] {
    let k1 = f(x, y);
    let k2 = f(x + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
    let k3 = f(x + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
    let k4 = f(x + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Sum of the two one-sided solutions of the second-order equation at a
/// fixed admissible parameter, with its cumulative integral.
#[derive(Clone, Debug)]
pub struct SigmaProfile {
    pub lambda: f64,
    pub xs: Vec<f64>,
    pub sigma: Vec<f64>,
    /// p sigma' on the same grid.
    pub p_sigma_prime: Vec<f64>,
    pub omega: f64,
    /// Normalized cumulative integral of sigma: strictly increasing, 0 to 1.
    pub t: Vec<f64>,
    pub min_sigma: f64,
    /// Interior finite-difference residual of the defining equation,
    /// relative to max sigma.
    pub fd_residual: f64,
}

/// Integrate the forward solution (vanishing at 0, unit co-derivative) and
/// the backward one (vanishing at 1), check positivity of each on its open
/// side, and form sigma as their sum.
pub fn sigma_solution(
    p: &CoefficientField,
    lambda: f64,
    admissible: &AdmissibleSet,
    tol: &Tolerances,
) -> Result<SigmaProfile> {
    if !admissible.contains(lambda, tol.admissible_margin) {
        return Err(Error::NotAdmissible { lambda, sup: admissible.sup_lambda });
    }
    let n = tol.sigma_steps;
    assert!(n >= 16 && n % 2 == 0, "sigma grid must be even and nontrivial");
    let h = 1.0 / n as f64;
    let deriv = |x: f64, s: [f64; 2]| [s[1] / p.eval_raw(x.clamp(0.0, 1.0)), -lambda * s[0]];

    let mut us = vec![0.0; n + 1];
    let mut qus = vec![0.0; n + 1];
    let mut state = [0.0, 1.0];
    qus[0] = 1.0;
    for i in 0..n {
        state = rk4_step2(i as f64 * h, state, h, &deriv);
        us[i + 1] = state[0];
        qus[i + 1] = state[1];
    }
    let mut ws = vec![0.0; n + 1];
    let mut qws = vec![0.0; n + 1];
    state = [0.0, -1.0];
    qws[n] = -1.0;
    for i in (0..n).rev() {
        state = rk4_step2((i + 1) as f64 * h, state, -h, &deriv);
        ws[i] = state[0];
        qws[i] = state[1];
    }

    for i in 1..=n {
        if !(us[i] > 0.0) {
            return Err(Error::PositivityLost(i as f64 * h));
        }
    }
    for i in 0..n {
        if !(ws[i] > 0.0) {
            return Err(Error::PositivityLost(i as f64 * h));
        }
    }

    let xs: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    let sigma: Vec<f64> = (0..=n).map(|i| us[i] + ws[i]).collect();
    let q: Vec<f64> = (0..=n).map(|i| qus[i] + qws[i]).collect();
    let min_sigma = sigma.iter().cloned().fold(f64::INFINITY, f64::min);

    // cumulative composite Simpson over interval pairs, with the
    // three-point rule for the odd prefixes
    let mut cum = vec![0.0; n + 1];
    let mut k = 0;
    while k + 2 <= n {
        cum[k + 1] = cum[k] + h / 12.0 * (5.0 * sigma[k] + 8.0 * sigma[k + 1] - sigma[k + 2]);
        cum[k + 2] = cum[k] + h / 3.0 * (sigma[k] + 4.0 * sigma[k + 1] + sigma[k + 2]);
        k += 2;
    }
    let omega = cum[n];
    let mut t: Vec<f64> = cum.iter().map(|&v| v / omega).collect();
    t[0] = 0.0;
    t[n] = 1.0;
    for w in t.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::RefinementStalled("cumulative integral not increasing"));
        }
    }

    let max_sigma = sigma.iter().cloned().fold(0.0, f64::max);
    let mut fd = 0.0f64;
    for i in 2..n - 1 {
        let dq = (-q[i + 2] + 8.0 * q[i + 1] - 8.0 * q[i - 1] + q[i - 2]) / (12.0 * h);
        fd = fd.max((-dq - lambda * sigma[i]).abs());
    }
    let fd_residual = fd / max_sigma;

    Ok(SigmaProfile {
        lambda,
        xs,
        sigma,
        p_sigma_prime: q,
        omega,
        t,
        min_sigma,
        fd_residual,
    })
}

/// The transported problem: stiffness and signed mass coefficient on the
/// image variable, plus the end-mass coefficient occupied by the probe.
#[derive(Clone, Debug)]
pub struct ModelProblem {
    pub p_hat: CoefficientField,
    pub r_hat: CoefficientField,
    /// Coefficient of the end-value square in the model form.
    pub alpha_term: f64,
    /// Probe parameter the transform was taken at.
    pub lambda: f64,
}

/// Transport the pencil at the probe parameter: p_hat = p sigma^3 / omega^3
/// and r_hat = lambda c r omega / sigma, both tabulated on the image grid.
pub fn transform_pencil(
    spec: &ProblemSpec,
    lambda: f64,
    profile: &SigmaProfile,
) -> Result<ModelProblem> {
    let om3 = profile.omega.powi(3);
    let mut p_pts = Vec::with_capacity(profile.t.len());
    let mut r_pts = Vec::with_capacity(profile.t.len());
    for i in 0..profile.t.len() {
        let x = profile.xs[i];
        let s = profile.sigma[i];
        p_pts.push((profile.t[i], spec.p.eval_raw(x) * s * s * s / om3));
        r_pts.push((
            profile.t[i],
            lambda * spec.c * spec.r.eval_raw(x) * profile.omega / s,
        ));
    }
    let p_hat = CoefficientField::table(p_pts)?.certify_uniformly_positive("p_hat")?;
    let r_hat = CoefficientField::table(r_pts)?;
    Ok(ModelProblem { p_hat, r_hat, alpha_term: lambda * spec.alpha, lambda })
}

/// Negative directions of the second-order form (gradient plus c-weighted
/// mass plus the end term) on the completion space matching the family.
pub fn sl_negative_count(spec: &ProblemSpec, mesh: &Mesh, tau_rel: f64) -> usize {
    let space = match spec.bc {
        BoundaryKind::ClampedClamped => SecondOrderSpace::DirichletBoth,
        BoundaryKind::ClampedMassEnd => SecondOrderSpace::DirichletLeft,
    };
    let forms = assembly::assemble_second_order(None, Some(&spec.r), space, mesh);
    let mut g = &forms.grad + spec.c * &forms.mass;
    if spec.bc == BoundaryKind::ClampedMassEnd {
        let e = forms.dof_map.end_value_free().expect("free end value");
        g[(e, e)] += spec.alpha;
    }
    let eigs = linalg::sym_eigenvalues_sorted(g);
    let norm = eigs[0].abs().max(eigs[eigs.len() - 1].abs());
    let tau = tau_rel * norm;
    eigs.iter().filter(|&&e| e < -tau).count()
}

pub fn poly_eval(c: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &ck in c.iter().rev() {
        acc = acc * x + ck;
    }
    acc
}

pub fn poly_deriv(c: &[f64]) -> Vec<f64> {
    if c.len() <= 1 {
        return vec![0.0];
    }
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(k, &ck)| k as f64 * ck)
        .collect()
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Random polynomial on the image variable meeting the essential conditions
/// of the family.
pub fn random_test_poly(bc: BoundaryKind, rng: &mut impl Rng) -> Vec<f64> {
    let mut q: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    if q.iter().all(|v| v.abs() < 0.1) {
        q[0] += 0.5;
    }
    match bc {
        BoundaryKind::ClampedClamped => {
            // t^2 (1-t)^2 q(t)
            poly_mul(&[0.0, 0.0, 1.0, -2.0, 1.0], &q)
        }
        BoundaryKind::ClampedMassEnd => {
            // t^2 h(t) + a t^3 with a chosen so the end slope vanishes
            let mut y = vec![0.0, 0.0];
            y.extend_from_slice(&q);
            let dy = poly_deriv(&y);
            let a = -poly_eval(&dy, 1.0) / 3.0;
            y[3] += a;
            y
        }
    }
}

/// Both sides of the transport identity for one test function, evaluated by
/// independent quadratures: the original form on the source grid against
/// the transported form on the image tables.
#[derive(Clone, Copy, Debug)]
pub struct CongruenceSample {
    pub original: f64,
    pub transported: f64,
    /// |original - transported| relative to the transported bending energy.
    pub defect: f64,
}

pub fn congruence_defect(
    spec: &ProblemSpec,
    profile: &SigmaProfile,
    model: &ModelProblem,
    y: &[f64],
) -> CongruenceSample {
    let lambda = profile.lambda;
    let dy = poly_deriv(y);
    let ddy = poly_deriv(&dy);
    let n = profile.xs.len() - 1;
    let h = 1.0 / n as f64;

    // source side: substituted function through the chain rule, Simpson
    let mut lhs = 0.0;
    for i in 0..=n {
        let x = profile.xs[i];
        let tt = profile.t[i];
        let s = profile.sigma[i];
        let sp = profile.p_sigma_prime[i] / spec.p.eval_raw(x);
        let z = poly_eval(y, tt);
        let zp = poly_eval(&dy, tt) * s / profile.omega;
        let zpp = poly_eval(&ddy, tt) * s * s / (profile.omega * profile.omega)
            + poly_eval(&dy, tt) * sp / profile.omega;
        let f = spec.p.eval_raw(x) * zpp * zpp
            - lambda * (zp * zp + spec.c * spec.r.eval_raw(x) * z * z);
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        lhs += w * f;
    }
    lhs *= h / 3.0;
    let z1 = poly_eval(y, 1.0);
    lhs -= lambda * spec.alpha * z1 * z1;

    // image side: transported tables against the polynomial, per-knot Gauss
    let gl_xi = [
        -0.906_179_845_938_663_9,
        -0.538_469_310_105_683_1,
        0.0,
        0.538_469_310_105_683_1,
        0.906_179_845_938_663_9,
    ];
    let gl_w = [
        0.236_926_885_056_189_08,
        0.478_628_670_499_366_47,
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_47,
        0.236_926_885_056_189_08,
    ];
    let mut bend = 0.0;
    let mut mass = 0.0;
    for w in profile.t.windows(2) {
        let half = 0.5 * (w[1] - w[0]);
        let mid = 0.5 * (w[1] + w[0]);
        for g in 0..5 {
            let t = mid + half * gl_xi[g];
            let wt = half * gl_w[g];
            let yd = poly_eval(&ddy, t);
            let yv = poly_eval(y, t);
            bend += wt * model.p_hat.eval_raw(t) * yd * yd;
            mass += wt * model.r_hat.eval_raw(t) * yv * yv;
        }
    }
    let rhs = bend - mass - model.alpha_term * z1 * z1;
    let defect = (lhs - rhs).abs() / bend.abs().max(f64::MIN_POSITIVE);
    CongruenceSample { original: lhs, transported: rhs, defect }
}

/// Singularity witnesses for the model matrix at the transported parameter.
#[derive(Clone, Copy, Debug)]
pub struct KernelWitness {
    /// Smallest over largest singular value of the model matrix.
    pub sv_ratio: f64,
    /// Distance of the nearest model slot eigenvalue from 1.
    pub slot_drift: f64,
}

/// Transport the problem at `lambda` and measure how singular the model
/// matrix is there. The model is assembled on the doubled mesh so that the
/// transported discretization does not dominate the measurement; `lambda`
/// should be the best available eigenvalue estimate for the same reason.
pub fn kernel_correspondence(
    spec: &ProblemSpec,
    mesh: &Mesh,
    lambda: f64,
    admissible: &AdmissibleSet,
    tol: &Tolerances,
) -> Result<KernelWitness> {
    let profile = sigma_solution(&spec.p, lambda, admissible, tol)?;
    let model = transform_pencil(spec, lambda, &profile)?;
    let fine = mesh.refine_double();
    let mm = assemble_model(&model.p_hat, &model.r_hat, model.alpha_term, spec.bc, &fine)?;
    let m = &mm.a_hat - &mm.b_hat;
    let sv = linalg::singular_values_sorted(&m);
    let sv_ratio = sv[0] / sv[sv.len() - 1].max(f64::MIN_POSITIVE);

    let red = reduce_pair(&mm.a_hat, &mm.b_hat)?;
    let mu = linalg::sym_eigenvalues_sorted(red.r);
    let mu_max = mu.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let floor = tol.mu_floor_rel * mu_max;
    let mut slot_drift = f64::INFINITY;
    for &m in &mu {
        if m.abs() > floor {
            slot_drift = slot_drift.min((-1.0 / m - 1.0).abs());
        }
    }
    Ok(KernelWitness { sv_ratio, slot_drift })
}
