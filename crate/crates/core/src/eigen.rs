//! Reduction of the symmetric matrix pencil to a single dense symmetric
//! matrix, both spectrum branches with refinement-validated entries, the
//! inertia index, and eigenfunction reconstruction.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::assembly::{assemble_pencil, HermiteInterpolant, PencilMatrices, SampledCurve};
use crate::assembly;
use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{BoundaryKind, Mesh, ProblemSpec, Tolerances};

/// R = -L^{-1} B L^{-T} for A = L L^T. Negative eigenvalues mu of R map to
/// pencil eigenvalues lambda = -1/mu; zero stays outside the spectrum.
#[derive(Clone, Debug)]
pub struct ReducedMatrix {
    pub r: DMatrix<f64>,
    pub l: DMatrix<f64>,
    /// ||L R L^T + B|| / ||B||, Frobenius.
    pub recon_defect: f64,
    /// Relative skew part of R before symmetrization.
    pub asymmetry: f64,
}

pub fn reduce_pair(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<ReducedMatrix> {
    let l = linalg::cholesky_lower(a, "pencil matrix A")?;
    let x = linalg::solve_lower(&l, b);
    let y = linalg::solve_lower(&l, &x.transpose());
    let r_raw = -y;
    let asymmetry = linalg::asymmetry(&r_raw);
    let r = 0.5 * (&r_raw + r_raw.transpose());
    let recon = &l * &r * l.transpose() + b;
    let recon_defect = recon.norm() / b.norm().max(f64::MIN_POSITIVE);
    Ok(ReducedMatrix { r, l, recon_defect, asymmetry })
}

pub fn reduce(m: &PencilMatrices) -> Result<ReducedMatrix> {
    reduce_pair(&m.a, &m.b)
}

/// One eigenvalue with its discrete eigenvector on the assembly mesh. The
/// vector is A-normalized by construction.
#[derive(Clone, Debug)]
pub struct SpectrumEntry {
    pub lambda: f64,
    /// Value on the doubled mesh, when the branch reaches this index there.
    pub refined: Option<f64>,
    pub converged: bool,
    pub vector: DVector<f64>,
}

impl SpectrumEntry {
    /// Fourth-order Richardson extrapolation of the two mesh levels; falls
    /// back to the assembly-mesh value when the refined one is missing.
    pub fn best_estimate(&self) -> f64 {
        match self.refined {
            Some(lf) => lf + (lf - self.lambda) / 15.0,
            None => self.lambda,
        }
    }
}

/// Both branches: negatives ordered decreasing from zero, positives
/// increasing from zero. Zero itself is never an eigenvalue.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub negatives: Vec<SpectrumEntry>,
    pub positives: Vec<SpectrumEntry>,
    pub mu_floor: f64,
    /// Branch sizes on the doubled mesh, for count-stability checks.
    pub refined_negatives: usize,
    pub refined_positives: usize,
    /// Leading run of refinement-validated entries per branch.
    pub converged_negatives: usize,
    pub converged_positives: usize,
}

impl Spectrum {
    /// Entry at signed index: -n is the n-th negative, +n the n-th positive.
    pub fn entry(&self, signed: i32) -> Result<&SpectrumEntry> {
        let list = if signed < 0 { &self.negatives } else { &self.positives };
        if signed == 0 {
            return Err(Error::NoSuchEigenvalue(0));
        }
        list.get(signed.unsigned_abs() as usize - 1)
            .ok_or(Error::NoSuchEigenvalue(signed))
    }
}

fn lambdas_from_mu(mu: &[f64], floor: f64) -> (Vec<(f64, usize)>, Vec<(f64, usize)>) {
    let mut neg: Vec<(f64, usize)> = Vec::new();
    let mut pos: Vec<(f64, usize)> = Vec::new();
    for (i, &m) in mu.iter().enumerate() {
        if m.abs() <= floor {
            continue;
        }
        let lambda = -1.0 / m;
        if lambda < 0.0 {
            neg.push((lambda, i));
        } else {
            pos.push((lambda, i));
        }
    }
    neg.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    pos.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    (neg, pos)
}

/// Solution bundle tying the spectrum to the data that produced it.
#[derive(Clone, Debug)]
pub struct PencilSolution {
    pub spec: ProblemSpec,
    pub mesh: Mesh,
    pub matrices: PencilMatrices,
    pub spectrum: Spectrum,
    pub tol: Tolerances,
}

/// Assemble on the mesh and on its refinement, reduce both, and mark the
/// entries whose relative drift under refinement stays within tolerance.
pub fn solve_pencil(spec: &ProblemSpec, mesh: &Mesh, tol: &Tolerances) -> Result<PencilSolution> {
    let matrices = assemble_pencil(spec, mesh)?;
    let red = reduce(&matrices)?;
    let (mu, u) = linalg::sym_eigen_sorted(red.r.clone());
    let mu_max = mu.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let floor = tol.mu_floor_rel * mu_max;

    let fine_mesh = mesh.refine_double();
    let fine = assemble_pencil(spec, &fine_mesh)?;
    let fine_red = reduce(&fine)?;
    let fine_mu = linalg::sym_eigenvalues_sorted(fine_red.r.clone());
    let fine_mu_max = fine_mu.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let fine_floor = tol.mu_floor_rel * fine_mu_max;

    let (neg, pos) = lambdas_from_mu(&mu, floor);
    let (fine_neg, fine_pos) = lambdas_from_mu(&fine_mu, fine_floor);

    let build = |branch: &[(f64, usize)], fine_branch: &[(f64, usize)]| -> Vec<SpectrumEntry> {
        branch
            .iter()
            .enumerate()
            .map(|(k, &(lambda, col))| {
                let refined = fine_branch.get(k).map(|&(lf, _)| lf);
                let converged = refined
                    .map(|lf| (lambda - lf).abs() <= tol.drift_tol * lf.abs().max(f64::MIN_POSITIVE))
                    .unwrap_or(false);
                let vector = linalg::solve_lower_transposed(&red.l, &DVector::from(u.column(col).clone_owned()));
                SpectrumEntry { lambda, refined, converged, vector }
            })
            .collect()
    };
    let negatives = build(&neg, &fine_neg);
    let positives = build(&pos, &fine_pos);
    let prefix = |v: &[SpectrumEntry]| v.iter().take_while(|e| e.converged).count();
    let spectrum = Spectrum {
        converged_negatives: prefix(&negatives),
        converged_positives: prefix(&positives),
        refined_negatives: fine_neg.len(),
        refined_positives: fine_pos.len(),
        negatives,
        positives,
        mu_floor: floor,
    };
    Ok(PencilSolution { spec: spec.clone(), mesh: mesh.clone(), matrices, spectrum, tol: tol.clone() })
}

/// Inertia of A - lambda B: eigenvalues below -tau, with a flag when some
/// eigenvalue sits inside the +-tau band.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Inertia {
    pub negative: usize,
    pub near_singular: bool,
}

pub fn inertia_index(m: &PencilMatrices, lambda: f64, tau_rel: f64) -> Inertia {
    let c = linalg::equilibrate_sym(&(&m.a - lambda * &m.b));
    let eigs = linalg::sym_eigenvalues_sorted(c);
    let norm = eigs
        .first()
        .map(|&a| a.abs())
        .unwrap_or(0.0)
        .max(eigs.last().map(|&a| a.abs()).unwrap_or(0.0));
    let tau = tau_rel * norm;
    Inertia {
        negative: eigs.iter().filter(|&&e| e < -tau).count(),
        near_singular: eigs.iter().any(|&e| e.abs() <= tau),
    }
}

/// A sampled eigenfunction: A-normalized, second derivative positive at the
/// left end, with strong-form and boundary diagnostics.
#[derive(Clone, Debug)]
pub struct EigenfunctionSample {
    pub signed_index: i32,
    pub lambda: f64,
    pub curve: SampledCurve,
    pub interpolant: HermiteInterpolant,
    /// Max strong-form residual at interior element midpoints, relative to
    /// (1+|lambda|) max|y|; second order in the mesh width.
    pub strong_residual: f64,
    /// |(p y'')'(1) + lambda alpha y(1)| for the mass-end family.
    pub natural_residual: Option<f64>,
    /// Max essential-condition violation over the endpoint samples.
    pub bc_residual: f64,
}

impl PencilSolution {
    pub fn eigenfunction(&self, signed: i32, samples: usize) -> Result<EigenfunctionSample> {
        let entry = self.spectrum.entry(signed)?;
        if !entry.converged {
            return Err(Error::NotConverged(signed));
        }
        reconstruct_eigenfunction(&self.spec, &self.mesh, &self.matrices, entry, signed, samples)
    }

    pub fn inertia(&self, lambda: f64) -> Inertia {
        inertia_index(&self.matrices, lambda, self.tol.inertia_tau_rel)
    }

    /// JSON document with eigenfunction samples for the validated entries.
    pub fn document(&self, samples: usize) -> Result<SpectrumDocument> {
        let mut eigenfunctions = Vec::new();
        for k in 0..self.spectrum.converged_negatives {
            let ef = self.eigenfunction(-(k as i32 + 1), samples)?;
            eigenfunctions.push(EigenfunctionDocument::from(&ef));
        }
        for k in 0..self.spectrum.converged_positives {
            let ef = self.eigenfunction(k as i32 + 1, samples)?;
            eigenfunctions.push(EigenfunctionDocument::from(&ef));
        }
        Ok(SpectrumDocument {
            negatives: self.spectrum.negatives.iter().map(|e| e.lambda).collect(),
            positives: self.spectrum.positives.iter().map(|e| e.lambda).collect(),
            converged_negatives: self.spectrum.converged_negatives,
            converged_positives: self.spectrum.converged_positives,
            eigenfunctions,
        })
    }
}

pub fn reconstruct_eigenfunction(
    spec: &ProblemSpec,
    mesh: &Mesh,
    matrices: &PencilMatrices,
    entry: &SpectrumEntry,
    signed_index: i32,
    samples: usize,
) -> Result<EigenfunctionSample> {
    let mut v = entry.vector.clone();
    let anorm = (v.dot(&(&matrices.a * &v))).sqrt();
    if anorm <= 0.0 {
        return Err(Error::TrivialInitialState);
    }
    v /= anorm;
    let mut interp = HermiteInterpolant::from_free(mesh, &matrices.dof_map, &v);
    if interp.eval_dd(0.0) < 0.0 {
        interp.negate();
    }
    let curve = interp.sample(samples);
    let lambda = entry.lambda;

    let max_y = curve.y.iter().fold(0.0f64, |m, &a| m.max(a.abs()));
    let n = mesh.n_elements();
    let mids: Vec<f64> = (0..n)
        .map(|k| {
            let (a, b) = mesh.element(k);
            0.5 * (a + b)
        })
        .collect();
    let g: Vec<f64> = mids
        .iter()
        .map(|&m| spec.p.eval_raw(m) * interp.eval_dd(m))
        .collect();
    let mut strong = 0.0f64;
    for k in 1..n.saturating_sub(1) {
        let (m1, m2, m3) = (mids[k - 1], mids[k], mids[k + 1]);
        let dd = 2.0 * ((g[k + 1] - g[k]) / (m3 - m2) - (g[k] - g[k - 1]) / (m2 - m1)) / (m3 - m1);
        let rhs = lambda
            * (-interp.eval_dd(m2) + spec.c * spec.r.eval_raw(m2) * interp.eval(m2));
        strong = strong.max((dd - rhs).abs());
    }
    let strong_residual = strong / ((1.0 + lambda.abs()) * max_y.max(f64::MIN_POSITIVE));

    let natural_residual = match spec.bc {
        BoundaryKind::ClampedMassEnd => {
            let shear = assembly::end_shear(&interp, &spec.p);
            Some((shear + lambda * spec.alpha * interp.eval(1.0)).abs())
        }
        BoundaryKind::ClampedClamped => None,
    };

    let last = curve.xs.len() - 1;
    let bc_residual = match spec.bc {
        BoundaryKind::ClampedClamped => curve.y[0]
            .abs()
            .max(curve.dy[0].abs())
            .max(curve.y[last].abs())
            .max(curve.dy[last].abs()),
        BoundaryKind::ClampedMassEnd => {
            curve.y[0].abs().max(curve.dy[0].abs()).max(curve.dy[last].abs())
        }
    };

    Ok(EigenfunctionSample {
        signed_index,
        lambda,
        curve,
        interpolant: interp,
        strong_residual,
        natural_residual,
        bc_residual,
    })
}

#[derive(Serialize)]
pub struct EigenfunctionDocument {
    pub signed_index: i32,
    pub lambda: f64,
    pub xs: Vec<f64>,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
    pub ddy: Vec<f64>,
}

impl From<&EigenfunctionSample> for EigenfunctionDocument {
    fn from(ef: &EigenfunctionSample) -> Self {
        EigenfunctionDocument {
            signed_index: ef.signed_index,
            lambda: ef.lambda,
            xs: ef.curve.xs.clone(),
            y: ef.curve.y.clone(),
            dy: ef.curve.dy.clone(),
            ddy: ef.curve.ddy.clone(),
        }
    }
}

#[derive(Serialize)]
pub struct SpectrumDocument {
    pub negatives: Vec<f64>,
    pub positives: Vec<f64>,
    pub converged_negatives: usize,
    pub converged_positives: usize,
    pub eigenfunctions: Vec<EigenfunctionDocument>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::CoefficientField;

    fn unit_spec(bc: BoundaryKind, c: f64, alpha: f64) -> ProblemSpec {
        ProblemSpec::new(
            CoefficientField::constant(1.0),
            CoefficientField::constant(1.0),
            c,
            alpha,
            bc,
        )
        .unwrap()
    }

    /// Smallest positive roots of 2 - 2 cos(m) - m sin(m) = 0 by bisection;
    /// the squares are the first buckling values of the clamped problem.
    fn buckling_oracle() -> (f64, f64) {
        let g = |m: f64| 2.0 - 2.0 * m.cos() - m * m.sin();
        let bisect = |mut lo: f64, mut hi: f64| {
            assert!(g(lo) * g(hi) < 0.0);
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

    #[test]
    fn reduce_identity_pair() {
        let i = DMatrix::<f64>::identity(3, 3);
        let red = reduce_pair(&i, &i).unwrap();
        assert!((&red.r + DMatrix::<f64>::identity(3, 3)).norm() < 1e-14);
        assert!(red.recon_defect < 1e-14);
    }

    #[test]
    fn reduce_diagonal_example() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        let red = reduce_pair(&a, &b).unwrap();
        assert!((red.r[(0, 0)] + 0.5).abs() < 1e-15);
        assert!((red.r[(1, 1)] + 3.0).abs() < 1e-15);
        assert!(red.r[(0, 1)].abs() < 1e-15);
        assert!(red.asymmetry < 1e-12);
    }

    #[test]
    fn reconstruction_defect_small_on_coarse_mesh() {
        let spec = unit_spec(BoundaryKind::ClampedClamped, -50.0, 0.0);
        let m = assemble_pencil(&spec, &Mesh::uniform(8)).unwrap();
        let red = reduce(&m).unwrap();
        assert!(red.recon_defect <= 1e-10, "defect {}", red.recon_defect);
        assert!(red.asymmetry <= 1e-12);
    }

    #[test]
    fn scaling_both_matrices_preserves_spectrum() {
        let spec = unit_spec(BoundaryKind::ClampedClamped, -50.0, 0.0);
        let m = assemble_pencil(&spec, &Mesh::uniform(8)).unwrap();
        let r1 = reduce(&m).unwrap();
        let t = 3.7;
        let r2 = reduce_pair(&(t * &m.a), &(t * &m.b)).unwrap();
        let e1 = linalg::sym_eigenvalues_sorted(r1.r);
        let e2 = linalg::sym_eigenvalues_sorted(r2.r);
        for (a, b) in e1.iter().zip(&e2) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-30), "{a} vs {b}");
        }
    }

    #[test]
    fn frictionless_problem_has_no_negative_branch() {
        let spec = unit_spec(BoundaryKind::ClampedClamped, 0.0, 0.0);
        let sol = solve_pencil(&spec, &Mesh::uniform(32), &Tolerances::default()).unwrap();
        assert!(sol.spectrum.negatives.is_empty());
        assert!(!sol.spectrum.positives.is_empty());
        // positives strictly increasing
        for w in sol.spectrum.positives.windows(2) {
            assert!(w[0].lambda < w[1].lambda);
        }
    }

    #[test]
    fn buckling_values_match_characteristic_equation() {
        let (l1, l2) = buckling_oracle();
        assert!((l1 - 4.0 * std::f64::consts::PI.powi(2)).abs() < 1e-9 * l1);
        let spec = unit_spec(BoundaryKind::ClampedClamped, 0.0, 0.0);
        let sol = solve_pencil(&spec, &Mesh::uniform(64), &Tolerances::default()).unwrap();
        let got1 = sol.spectrum.positives[0].lambda;
        let got2 = sol.spectrum.positives[1].lambda;
        assert!((got1 - l1).abs() <= 1e-6 * l1, "{got1} vs {l1}");
        assert!((got2 - l2).abs() <= 1e-6 * l2, "{got2} vs {l2}");
        assert!(sol.spectrum.converged_positives >= 2);
    }

    #[test]
    fn negative_branch_count_matches_friction_strength() {
        // c=-50: two second-order directions go negative, so two negative
        // pencil eigenvalues.
        let spec = unit_spec(BoundaryKind::ClampedClamped, -50.0, 0.0);
        let sol = solve_pencil(&spec, &Mesh::uniform(64), &Tolerances::default()).unwrap();
        assert_eq!(sol.spectrum.negatives.len(), 2);
        assert!(sol.spectrum.converged_negatives >= 2);
        assert!(sol.spectrum.negatives[0].lambda > sol.spectrum.negatives[1].lambda);
    }

    #[test]
    fn inertia_index_examples() {
        let free = unit_spec(BoundaryKind::ClampedClamped, 0.0, 0.0);
        let m = assemble_pencil(&free, &Mesh::uniform(64)).unwrap();
        let tau = Tolerances::default().inertia_tau_rel;
        assert_eq!(inertia_index(&m, 0.0, tau).negative, 0);
        // between the first two buckling values
        assert_eq!(inertia_index(&m, 50.0, tau).negative, 1);

        let fric = unit_spec(BoundaryKind::ClampedClamped, -50.0, 0.0);
        let mf = assemble_pencil(&fric, &Mesh::uniform(64)).unwrap();
        assert_eq!(inertia_index(&mf, -1e4, tau).negative, 2);
    }

    #[test]
    fn inertia_counts_step_by_one_between_negative_eigenvalues() {
        let spec = unit_spec(BoundaryKind::ClampedClamped, -50.0, 0.0);
        let sol = solve_pencil(&spec, &Mesh::uniform(64), &Tolerances::default()).unwrap();
        let l1 = sol.spectrum.negatives[0].lambda;
        let l2 = sol.spectrum.negatives[1].lambda;
        assert_eq!(sol.inertia(l1 * 0.5).negative, 0);
        assert_eq!(sol.inertia(0.5 * (l1 + l2)).negative, 1);
        assert_eq!(sol.inertia(l2 * 2.0).negative, 2);
    }

    #[test]
    fn eigenvectors_are_b_orthogonal_and_a_normalized() {
        let spec = unit_spec(BoundaryKind::ClampedClamped, -50.0, 0.0);
        let sol = solve_pencil(&spec, &Mesh::uniform(32), &Tolerances::default()).unwrap();
        let mut all: Vec<&SpectrumEntry> = sol.spectrum.negatives.iter().collect();
        all.extend(sol.spectrum.positives.iter().take(6));
        for (i, e1) in all.iter().enumerate() {
            let an = e1.vector.dot(&(&sol.matrices.a * &e1.vector));
            assert!((an - 1.0).abs() <= 1e-8, "A-norm {an}");
            for e2 in all.iter().skip(i + 1) {
                let cross = e1.vector.dot(&(&sol.matrices.b * &e2.vector)).abs();
                assert!(cross <= 1e-8, "B-cross {cross}");
            }
        }
    }

    #[test]
    fn first_buckling_mode_is_symmetric_and_positive_curved() {
        let spec = unit_spec(BoundaryKind::ClampedClamped, 0.0, 0.0);
        let sol = solve_pencil(&spec, &Mesh::uniform(64), &Tolerances::default()).unwrap();
        let ef = sol.eigenfunction(1, 1001).unwrap();
        assert!(ef.interpolant.eval_dd(0.0) > 0.0);
        assert!(ef.bc_residual <= 1e-12);
        let n = ef.curve.y.len();
        for i in 0..n {
            let d = (ef.curve.y[i] - ef.curve.y[n - 1 - i]).abs();
            assert!(d <= 1e-8, "symmetry defect {d}");
        }
        // interior positivity of the first mode
        for i in 1..n - 1 {
            assert!(ef.curve.y[i] > 0.0);
        }
    }

    #[test]
    fn strong_residual_shrinks_under_refinement() {
        let spec = unit_spec(BoundaryKind::ClampedClamped, -50.0, 0.0);
        let r = |n: usize| {
            let sol = solve_pencil(&spec, &Mesh::uniform(n), &Tolerances::default()).unwrap();
            sol.eigenfunction(-1, 501).unwrap().strong_residual
        };
        let (r32, r64) = (r(32), r(64));
        assert!(r64 < r32, "residual did not shrink: {r32} -> {r64}");
        assert!(r32 / r64 > 2.5, "expected near fourfold decay, got {}", r32 / r64);
    }

    #[test]
    fn mass_end_natural_condition_diagnostic_small() {
        let spec = unit_spec(BoundaryKind::ClampedMassEnd, -50.0, -1.0);
        let sol = solve_pencil(&spec, &Mesh::uniform(128), &Tolerances::default()).unwrap();
        let ef = sol.eigenfunction(-1, 1001).unwrap();
        let max_y = ef.curve.y.iter().fold(0.0f64, |m, &a| m.max(a.abs()));
        let nr = ef.natural_residual.unwrap();
        assert!(nr <= 1e-4 * max_y, "natural residual {nr} vs max|y| {max_y}");
    }

    #[test]
    fn signed_index_lookup() {
        let spec = unit_spec(BoundaryKind::ClampedClamped, -50.0, 0.0);
        let sol = solve_pencil(&spec, &Mesh::uniform(32), &Tolerances::default()).unwrap();
        assert_eq!(
            sol.spectrum.entry(-1).unwrap().lambda,
            sol.spectrum.negatives[0].lambda
        );
        assert_eq!(
            sol.spectrum.entry(2).unwrap().lambda,
            sol.spectrum.positives[1].lambda
        );
        assert!(sol.spectrum.entry(0).is_err());
        assert!(sol.spectrum.entry(-3).is_err());
    }

    #[test]
    fn cauchy_drift_decreases_under_doubling() {
        let spec = unit_spec(BoundaryKind::ClampedClamped, 0.0, 0.0);
        let l = |n: usize| {
            solve_pencil(&spec, &Mesh::uniform(n), &Tolerances::default())
                .unwrap()
                .spectrum
                .positives[0]
                .lambda
        };
        let (l8, l16, l32) = (l(8), l(16), l(32));
        assert!((l16 - l32).abs() < (l8 - l16).abs());
    }
}
