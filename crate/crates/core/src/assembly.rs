//! Conforming C1 cubic Hermite elements on [0,1]: matrix assembly for the
//! fourth- and second-order forms, discrete solves, and interpolation.
//!
//! Each node carries a value and a slope degree of freedom. Element
//! integrals use a fixed 5-point Gauss rule, split at table knots so that
//! piecewise-linear coefficients are integrated exactly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{BoundaryKind, CoefficientField, Mesh, ProblemSpec};

const GL5_XI: [f64; 5] = [
    -0.906_179_845_938_663_9,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_663_9,
];
const GL5_W: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DofKind {
    Value,
    Slope,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dof {
    pub node: usize,
    pub kind: DofKind,
}

/// Map between free unknowns and global (node, kind) degrees of freedom
/// after essential-condition elimination.
#[derive(Clone, Debug)]
pub struct DofMap {
    free: Vec<Dof>,
    global_to_free: Vec<Option<usize>>,
    n_nodes: usize,
}

/// Essential conditions for the second-order problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SecondOrderSpace {
    /// y(0) = y(1) = 0
    DirichletBoth,
    /// y(0) = 0, right end free
    DirichletLeft,
}

impl DofMap {
    fn build(n_nodes: usize, essential: &[usize]) -> Self {
        let total = 2 * n_nodes;
        let mut global_to_free = vec![None; total];
        let mut free = Vec::with_capacity(total - essential.len());
        for g in 0..total {
            if essential.contains(&g) {
                continue;
            }
            global_to_free[g] = Some(free.len());
            free.push(Dof {
                node: g / 2,
                kind: if g % 2 == 0 { DofKind::Value } else { DofKind::Slope },
            });
        }
        DofMap { free, global_to_free, n_nodes }
    }

    pub fn fourth_order(bc: BoundaryKind, n_nodes: usize) -> Self {
        let last = n_nodes - 1;
        let essential = match bc {
            BoundaryKind::ClampedClamped => vec![0, 1, 2 * last, 2 * last + 1],
            BoundaryKind::ClampedMassEnd => vec![0, 1, 2 * last + 1],
        };
        Self::build(n_nodes, &essential)
    }

    pub fn second_order(space: SecondOrderSpace, n_nodes: usize) -> Self {
        let last = n_nodes - 1;
        let essential = match space {
            SecondOrderSpace::DirichletBoth => vec![0, 2 * last],
            SecondOrderSpace::DirichletLeft => vec![0],
        };
        Self::build(n_nodes, &essential)
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn free(&self) -> &[Dof] {
        &self.free
    }

    pub fn free_of_global(&self, g: usize) -> Option<usize> {
        self.global_to_free[g]
    }

    /// Free index of the value unknown at x=1, when it is free.
    pub fn end_value_free(&self) -> Option<usize> {
        self.global_to_free[2 * (self.n_nodes - 1)]
    }

    /// Expand a free vector to per-node values and slopes, zeros on the
    /// eliminated conditions.
    pub fn scatter(&self, v: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let mut values = vec![0.0; self.n_nodes];
        let mut slopes = vec![0.0; self.n_nodes];
        for (i, dof) in self.free.iter().enumerate() {
            match dof.kind {
                DofKind::Value => values[dof.node] = v[i],
                DofKind::Slope => slopes[dof.node] = v[i],
            }
        }
        (values, slopes)
    }
}

fn shape_value(s: f64, h: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        1.0 - 3.0 * s2 + 2.0 * s3,
        h * (s - 2.0 * s2 + s3),
        3.0 * s2 - 2.0 * s3,
        h * (s3 - s2),
    ]
}

fn shape_d1(s: f64, h: f64) -> [f64; 4] {
    let s2 = s * s;
    [
        (6.0 * s2 - 6.0 * s) / h,
        1.0 - 4.0 * s + 3.0 * s2,
        (6.0 * s - 6.0 * s2) / h,
        3.0 * s2 - 2.0 * s,
    ]
}

fn shape_d2(s: f64, h: f64) -> [f64; 4] {
    [
        (12.0 * s - 6.0) / (h * h),
        (6.0 * s - 4.0) / h,
        (6.0 - 12.0 * s) / (h * h),
        (6.0 * s - 2.0) / h,
    ]
}

#[derive(Clone, Copy)]
pub(crate) enum FormOrder {
    Value,
    First,
    Second,
}

/// Quadrature points and x-measure weights on [a,b], split at the given
/// interior break points.
fn quad_points(a: f64, b: f64, breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut cuts = Vec::with_capacity(breaks.len() + 2);
    cuts.push(a);
    cuts.extend_from_slice(breaks);
    cuts.push(b);
    let mut pts = Vec::with_capacity(5 * (cuts.len() - 1));
    for seg in cuts.windows(2) {
        let (lo, hi) = (seg[0], seg[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for g in 0..5 {
            pts.push((mid + half * GL5_XI[g], half * GL5_W[g]));
        }
    }
    pts
}

/// Assemble the symmetric form with the given derivative order and optional
/// weight over the free unknowns.
pub(crate) fn assemble_weighted_form(
    mesh: &Mesh,
    map: &DofMap,
    order: FormOrder,
    coeff: Option<&CoefficientField>,
) -> DMatrix<f64> {
    let n = map.n_free();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..mesh.n_elements() {
        let (a, b) = mesh.element(k);
        let h = b - a;
        let breaks = coeff.map(|c| c.breakpoints_in(a, b)).unwrap_or_default();
        let mut local = [[0.0f64; 4]; 4];
        for (x, w) in quad_points(a, b, &breaks) {
            let s = (x - a) / h;
            let phi = match order {
                FormOrder::Value => shape_value(s, h),
                FormOrder::First => shape_d1(s, h),
                FormOrder::Second => shape_d2(s, h),
            };
            let wv = match coeff {
                Some(c) => w * c.eval_raw(x),
                None => w,
            };
            for i in 0..4 {
                for j in i..4 {
                    local[i][j] += wv * phi[i] * phi[j];
                }
            }
        }
        for i in 0..4 {
            for j in 0..i {
                local[i][j] = local[j][i];
            }
        }
        let gdofs = [2 * k, 2 * k + 1, 2 * k + 2, 2 * k + 3];
        for (li, &gi) in gdofs.iter().enumerate() {
            let Some(fi) = map.free_of_global(gi) else { continue };
            for (lj, &gj) in gdofs.iter().enumerate() {
                if let Some(fj) = map.free_of_global(gj) {
                    out[(fi, fj)] += local[li][lj];
                }
            }
        }
    }
    out
}

/// Discretization of the pencil: A from the bending form, B from the
/// gradient + weighted-mass form with the end-mass contribution on its
/// diagonal for the mass-end family.
#[derive(Clone, Debug)]
pub struct PencilMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub dof_map: DofMap,
}

pub fn assemble_pencil(spec: &ProblemSpec, mesh: &Mesh) -> Result<PencilMatrices> {
    let map = DofMap::fourth_order(spec.bc, mesh.n_nodes());
    if map.n_free() == 0 {
        return Err(Error::MeshTooCoarse(0));
    }
    let a = assemble_weighted_form(mesh, &map, FormOrder::Second, Some(&spec.p));
    let grad = assemble_weighted_form(mesh, &map, FormOrder::First, None);
    let mass = assemble_weighted_form(mesh, &map, FormOrder::Value, Some(&spec.r));
    let mut b = grad + spec.c * mass;
    if spec.bc == BoundaryKind::ClampedMassEnd {
        let e = map.end_value_free().expect("end value free for mass-end");
        b[(e, e)] += spec.alpha;
    }
    Ok(PencilMatrices { a, b, dof_map: map })
}

/// Discretization of the model pencil: bending form of `p_hat` against the
/// weighted mass of `r_hat` plus `alpha` on the end-value diagonal.
#[derive(Clone, Debug)]
pub struct ModelMatrices {
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    pub dof_map: DofMap,
}

pub fn assemble_model(
    p_hat: &CoefficientField,
    r_hat: &CoefficientField,
    alpha: f64,
    bc: BoundaryKind,
    mesh: &Mesh,
) -> Result<ModelMatrices> {
    let map = DofMap::fourth_order(bc, mesh.n_nodes());
    if map.n_free() == 0 {
        return Err(Error::MeshTooCoarse(0));
    }
    let a_hat = assemble_weighted_form(mesh, &map, FormOrder::Second, Some(p_hat));
    let mut b_hat = assemble_weighted_form(mesh, &map, FormOrder::Value, Some(r_hat));
    if bc == BoundaryKind::ClampedMassEnd {
        let e = map.end_value_free().expect("end value free for mass-end");
        b_hat[(e, e)] += alpha;
    }
    Ok(ModelMatrices { a_hat, b_hat, dof_map: map })
}

/// Gradient and mass matrices of the second-order forms on the reduced
/// space, kept separate so callers can combine them with their own scalars.
#[derive(Clone, Debug)]
pub struct SecondOrderForms {
    pub grad: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub dof_map: DofMap,
}

pub fn assemble_second_order(
    grad_coeff: Option<&CoefficientField>,
    mass_coeff: Option<&CoefficientField>,
    space: SecondOrderSpace,
    mesh: &Mesh,
) -> SecondOrderForms {
    let map = DofMap::second_order(space, mesh.n_nodes());
    let grad = assemble_weighted_form(mesh, &map, FormOrder::First, grad_coeff);
    let mass = assemble_weighted_form(mesh, &map, FormOrder::Value, mass_coeff);
    SecondOrderForms { grad, mass, dof_map: map }
}

/// Piecewise cubic C1 interpolant from nodal values and slopes.
#[derive(Clone, Debug)]
pub struct HermiteInterpolant {
    mesh: Mesh,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl HermiteInterpolant {
    pub fn new(mesh: Mesh, values: Vec<f64>, slopes: Vec<f64>) -> Self {
        assert_eq!(values.len(), mesh.n_nodes());
        assert_eq!(slopes.len(), mesh.n_nodes());
        HermiteInterpolant { mesh, values, slopes }
    }

    pub fn from_free(mesh: &Mesh, map: &DofMap, v: &DVector<f64>) -> Self {
        let (values, slopes) = map.scatter(v);
        Self::new(mesh.clone(), values, slopes)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    fn locate(&self, x: f64) -> (usize, f64, f64) {
        let k = self.mesh.element_of(x);
        let (a, b) = self.mesh.element(k);
        let h = b - a;
        ((k), (x - a) / h, h)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (k, s, h) = self.locate(x);
        let phi = shape_value(s, h);
        self.combine(k, &phi)
    }

    pub fn eval_d(&self, x: f64) -> f64 {
        let (k, s, h) = self.locate(x);
        let phi = shape_d1(s, h);
        self.combine(k, &phi)
    }

    pub fn eval_dd(&self, x: f64) -> f64 {
        let (k, s, h) = self.locate(x);
        let phi = shape_d2(s, h);
        self.combine(k, &phi)
    }

    fn combine(&self, k: usize, phi: &[f64; 4]) -> f64 {
        phi[0] * self.values[k]
            + phi[1] * self.slopes[k]
            + phi[2] * self.values[k + 1]
            + phi[3] * self.slopes[k + 1]
    }

    pub fn negate(&mut self) {
        for v in &mut self.values {
            *v = -*v;
        }
        for s in &mut self.slopes {
            *s = -*s;
        }
    }

    /// Uniform samples of (y, y', y'') including both endpoints.
    pub fn sample(&self, n: usize) -> SampledCurve {
        assert!(n >= 2);
        let mut xs = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut dy = Vec::with_capacity(n);
        let mut ddy = Vec::with_capacity(n);
        for i in 0..n {
            let x = i as f64 / (n - 1) as f64;
            xs.push(x);
            y.push(self.eval(x));
            dy.push(self.eval_d(x));
            ddy.push(self.eval_dd(x));
        }
        SampledCurve { xs, y, dy, ddy }
    }
}

#[derive(Clone, Debug)]
pub struct SampledCurve {
    pub xs: Vec<f64>,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
    pub ddy: Vec<f64>,
}

/// Recover (p y'')'(1) from superconvergent element-midpoint values of
/// p y'' near the right end (quadratic extrapolation).
pub fn end_shear(interp: &HermiteInterpolant, p: &CoefficientField) -> f64 {
    let mesh = interp.mesh();
    let n = mesh.n_elements();
    let g = |k: usize| {
        let (a, b) = mesh.element(k);
        let m = 0.5 * (a + b);
        p.eval_raw(m) * interp.eval_dd(m)
    };
    if n < 3 {
        let (a, b) = mesh.element(n - 1);
        let q1 = a + 0.25 * (b - a);
        let q3 = a + 0.75 * (b - a);
        return (p.eval_raw(q3) * interp.eval_dd(q3) - p.eval_raw(q1) * interp.eval_dd(q1))
            / (0.5 * (b - a));
    }
    let ms: Vec<f64> = (n - 3..n)
        .map(|k| {
            let (a, b) = mesh.element(k);
            0.5 * (a + b)
        })
        .collect();
    let gs = [g(n - 3), g(n - 2), g(n - 1)];
    let z = 1.0;
    let mut d = 0.0;
    for i in 0..3 {
        let (j, l) = match i {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        d += gs[i] * (2.0 * z - ms[j] - ms[l]) / ((ms[i] - ms[j]) * (ms[i] - ms[l]));
    }
    d
}

/// Solution of the discrete source problem for the bending form.
#[derive(Clone, Debug)]
pub struct BvpSolution {
    pub coeffs: DVector<f64>,
    pub interpolant: HermiteInterpolant,
    /// Normwise backward error ||A y - l|| / (||A|| ||y|| + ||l||); sits at
    /// rounding level for a stable solve on any mesh.
    pub weak_residual: f64,
}

/// Solve the weak problem: bending form of `p` equals the `r`-weighted load
/// of `f`, plus the end contribution `alpha * f(1)` against the end value
/// test unknown for the mass-end family.
pub fn solve_model_bvp(
    p: &CoefficientField,
    r: &CoefficientField,
    alpha: f64,
    bc: BoundaryKind,
    mesh: &Mesh,
    f: impl Fn(f64) -> f64,
) -> Result<BvpSolution> {
    let map = DofMap::fourth_order(bc, mesh.n_nodes());
    if map.n_free() == 0 {
        return Err(Error::MeshTooCoarse(0));
    }
    let a = assemble_weighted_form(mesh, &map, FormOrder::Second, Some(p));
    let mut load = DVector::zeros(map.n_free());
    for k in 0..mesh.n_elements() {
        let (lo, hi) = mesh.element(k);
        let h = hi - lo;
        let breaks = r.breakpoints_in(lo, hi);
        let mut local = [0.0f64; 4];
        for (x, w) in quad_points(lo, hi, &breaks) {
            let s = (x - lo) / h;
            let phi = shape_value(s, h);
            let wv = w * r.eval_raw(x) * f(x);
            for i in 0..4 {
                local[i] += wv * phi[i];
            }
        }
        let gdofs = [2 * k, 2 * k + 1, 2 * k + 2, 2 * k + 3];
        for (li, &gi) in gdofs.iter().enumerate() {
            if let Some(fi) = map.free_of_global(gi) {
                load[fi] += local[li];
            }
        }
    }
    if bc == BoundaryKind::ClampedMassEnd {
        let e = map.end_value_free().expect("end value free for mass-end");
        load[e] += alpha * f(1.0);
    }
    let l = linalg::cholesky_lower(&a, "bending matrix")?;
    let w = linalg::solve_lower(&l, &DMatrix::from_column_slice(load.len(), 1, load.as_slice()));
    let coeffs = linalg::solve_lower_transposed(&l, &DVector::from_column_slice(w.as_slice()));
    let resid = (&a * &coeffs - &load).norm();
    let scale = a.norm() * coeffs.norm() + load.norm();
    let weak_residual = resid / scale.max(f64::MIN_POSITIVE);
    let interpolant = HermiteInterpolant::from_free(mesh, &map, &coeffs);
    Ok(BvpSolution { coeffs, interpolant, weak_residual })
}

/// Full symmetric matrix as row-major CSV, for debugging.
pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}
