//! Problem data: coefficient fields on [0,1], boundary-condition families,
//! meshes, tolerances, and JSON configuration parsing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points in the uniform positivity scan. The grid nests inside the ten
/// times finer one, so a failure at this resolution persists under refinement.
pub const POSITIVITY_SCAN_POINTS: usize = 10_001;

const DOMAIN_SLACK: f64 = 1e-12;

/// The three accepted coefficient representations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientKind {
    Const(f64),
    Poly(Vec<f64>),
    Table(Vec<(f64, f64)>),
}

/// A scalar coefficient on [0,1]. Tables are interpolated linearly between
/// knots; polynomials are stored by ascending-power coefficients.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientField {
    kind: CoefficientKind,
    /// Certified minimum from the positivity scan, when one has been run.
    eps0: Option<f64>,
}

impl CoefficientField {
    pub fn constant(v: f64) -> Self {
        CoefficientField { kind: CoefficientKind::Const(v), eps0: None }
    }

    pub fn poly(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Config("poly coefficient list is empty".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("poly coefficient not finite".into()));
        }
        Ok(CoefficientField { kind: CoefficientKind::Poly(coeffs), eps0: None })
    }

    /// Knots must be strictly increasing and span [0,1].
    pub fn table(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Config("table needs at least two knots".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Config(format!(
                    "table knots not strictly increasing at x={}",
                    w[1].0
                )));
            }
        }
        if points.iter().any(|(x, v)| !x.is_finite() || !v.is_finite()) {
            return Err(Error::Config("table entry not finite".into()));
        }
        let first = points.first().unwrap().0;
        let last = points.last().unwrap().0;
        if first.abs() > 1e-9 || (last - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "table must span [0,1], got [{first},{last}]"
            )));
        }
        let mut points = points;
        points.first_mut().unwrap().0 = 0.0;
        points.last_mut().unwrap().0 = 1.0;
        Ok(CoefficientField { kind: CoefficientKind::Table(points), eps0: None })
    }

    pub fn from_kind(kind: CoefficientKind) -> Result<Self> {
        match kind {
            CoefficientKind::Const(v) => {
                if !v.is_finite() {
                    return Err(Error::Config("const coefficient not finite".into()));
                }
                Ok(Self::constant(v))
            }
            CoefficientKind::Poly(c) => Self::poly(c),
            CoefficientKind::Table(t) => Self::table(t),
        }
    }

    pub fn kind(&self) -> &CoefficientKind {
        &self.kind
    }

    /// Certified scan minimum, set by [`certify_uniformly_positive`].
    pub fn eps0(&self) -> Option<f64> {
        self.eps0
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(-DOMAIN_SLACK..=1.0 + DOMAIN_SLACK).contains(&x) {
            return Err(Error::OutOfDomain(x));
        }
        Ok(self.eval_raw(x.clamp(0.0, 1.0)))
    }

    /// Evaluation without the domain check; callers guarantee x in [0,1].
    pub fn eval_raw(&self, x: f64) -> f64 {
        match &self.kind {
            CoefficientKind::Const(v) => *v,
            CoefficientKind::Poly(c) => {
                let mut acc = 0.0;
                for &ck in c.iter().rev() {
                    acc = acc * x + ck;
                }
                acc
            }
            CoefficientKind::Table(pts) => {
                // binary search for the knot interval containing x
                let n = pts.len();
                if x <= pts[0].0 {
                    return pts[0].1;
                }
                if x >= pts[n - 1].0 {
                    return pts[n - 1].1;
                }
                let mut lo = 0;
                let mut hi = n - 1;
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if pts[mid].0 <= x {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let (x0, v0) = pts[lo];
                let (x1, v1) = pts[hi];
                let s = (x - x0) / (x1 - x0);
                v0 + s * (v1 - v0)
            }
        }
    }

    /// Scan the uniform grid; require a strictly positive minimum and record
    /// it as the certificate. `field` names the coefficient in errors.
    pub fn certify_uniformly_positive(mut self, field: &str) -> Result<Self> {
        let (xmin, vmin) = self.scan_min(POSITIVITY_SCAN_POINTS);
        if !(vmin > 0.0) {
            return Err(Error::NotUniformlyPositive { field: field.to_string(), x: xmin, value: vmin });
        }
        self.eps0 = Some(vmin);
        Ok(self)
    }

    /// Minimum over an `n`-point uniform scan of [0,1], with its location.
    pub fn scan_min(&self, n: usize) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        for i in 0..n {
            let x = i as f64 / (n - 1) as f64;
            let v = self.eval_raw(x);
            if v < best.1 {
                best = (x, v);
            }
        }
        best
    }

    /// Interior break points inside (a,b) where the integrand loses
    /// smoothness; quadrature splits there. Only tables have any.
    pub fn breakpoints_in(&self, a: f64, b: f64) -> Vec<f64> {
        match &self.kind {
            CoefficientKind::Table(pts) => pts
                .iter()
                .map(|&(x, _)| x)
                .filter(|&x| x > a + DOMAIN_SLACK && x < b - DOMAIN_SLACK)
                .collect(),
            _ => Vec::new(),
        }
    }
}

/// Supported boundary-condition families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// y(0)=y'(0)=y(1)=y'(1)=0
    ClampedClamped,
    /// y(0)=y'(0)=y'(1)=0, with the end-mass term entering the lambda slot
    ClampedMassEnd,
}

impl BoundaryKind {
    pub fn min_elements(self) -> usize {
        match self {
            BoundaryKind::ClampedClamped => 2,
            BoundaryKind::ClampedMassEnd => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            BoundaryKind::ClampedClamped => BoundaryKind::ClampedMassEnd,
            BoundaryKind::ClampedMassEnd => BoundaryKind::ClampedClamped,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BoundaryKind::ClampedClamped => "clamped_clamped",
            BoundaryKind::ClampedMassEnd => "clamped_mass_end",
        }
    }
}

/// Validated problem data: positive p and r, finite c and alpha, and the
/// boundary family.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub p: CoefficientField,
    pub r: CoefficientField,
    pub c: f64,
    pub alpha: f64,
    pub bc: BoundaryKind,
}

impl ProblemSpec {
    pub fn new(
        p: CoefficientField,
        r: CoefficientField,
        c: f64,
        alpha: f64,
        bc: BoundaryKind,
    ) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::Config("c not finite".into()));
        }
        if !alpha.is_finite() {
            return Err(Error::Config("alpha not finite".into()));
        }
        let p = p.certify_uniformly_positive("p")?;
        let r = r.certify_uniformly_positive("r")?;
        Ok(ProblemSpec { p, r, c, alpha, bc })
    }

    /// Same data under the other boundary family.
    pub fn with_bc(&self, bc: BoundaryKind) -> Self {
        let mut s = self.clone();
        s.bc = bc;
        s
    }
}

/// Partition of [0,1]; uniform unless built from an explicit node list.
#[derive(Clone, Debug)]
pub struct Mesh {
    nodes: Vec<f64>,
}

impl Mesh {
    pub fn uniform(n_elements: usize) -> Self {
        assert!(n_elements >= 1, "mesh needs at least one element");
        let nodes = (0..=n_elements)
            .map(|i| i as f64 / n_elements as f64)
            .collect();
        Mesh { nodes }
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Config("mesh needs at least two nodes".into()));
        }
        if (nodes[0]).abs() > 1e-12 || (nodes[nodes.len() - 1] - 1.0).abs() > 1e-12 {
            return Err(Error::Config("mesh must span [0,1]".into()));
        }
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Config("mesh nodes not strictly increasing".into()));
            }
        }
        let mut nodes = nodes;
        nodes[0] = 0.0;
        let last = nodes.len() - 1;
        nodes[last] = 1.0;
        Ok(Mesh { nodes })
    }

    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn element(&self, k: usize) -> (f64, f64) {
        (self.nodes[k], self.nodes[k + 1])
    }

    /// Index of the element containing x (right-closed at the last element).
    pub fn element_of(&self, x: f64) -> usize {
        let n = self.n_elements();
        match self.nodes.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(n - 1),
            Err(i) => (i.max(1) - 1).min(n - 1),
        }
    }

    /// Every element split at its midpoint.
    pub fn refine_double(&self) -> Mesh {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len() - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(1.0);
        Mesh { nodes }
    }
}

/// Every tolerance and fixed numeric control in one place. Config files may
/// override individual fields.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative floor under which a reduced-matrix eigenvalue is treated as
    /// "no pencil eigenvalue".
    pub mu_floor_rel: f64,
    /// Relative drift between a mesh and its refinement that still counts as
    /// converged.
    pub drift_tol: f64,
    /// Relative threshold for counting/flagging eigenvalues of A - lambda B
    /// around zero.
    pub inertia_tau_rel: f64,
    /// Minimum relative gap for an eigenvalue to be reported simple.
    pub simplicity_gap_rel: f64,
    /// Required ratio of second-smallest to smallest singular value for a
    /// one-dimensional kernel.
    pub kernel_ratio_min: f64,
    /// Sign-counting dead band, relative to the max absolute sample.
    pub value_tol_rel: f64,
    /// Simple-zero derivative threshold, relative to the max |y'| sample.
    pub deriv_tol_rel: f64,
    /// Relative refinement target for the admissible supremum.
    pub admissible_rel: f64,
    /// Strictness margin kept below the admissible supremum.
    pub admissible_margin: f64,
    /// Congruence defect bound, relative to the model bending energy.
    pub congruence_tol: f64,
    /// Relative smallest-singular-value bound certifying the model matrix
    /// singular at the transported parameter.
    pub model_kernel_tol: f64,
    /// Minimum relative gap required by the interlacing chain.
    pub interlace_gap_rel: f64,
    /// Fixed-step count for the one-sided second-order solutions; also the
    /// knot count of the transported coefficient tables, whose linear
    /// interpolation error, not the integrator, limits the congruence
    /// defect.
    pub sigma_steps: usize,
    /// Interior finite-difference residual bound for the sigma profile,
    /// relative to max sigma.
    pub sigma_residual_tol: f64,
    /// Fixed step for the fourth-order initial-value integrations.
    pub cone_step: f64,
    /// Weak-residual bound for discrete solves, relative to the load norm.
    pub solve_residual_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            mu_floor_rel: 1e-12,
            drift_tol: 1e-4,
            inertia_tau_rel: 1e-10,
            simplicity_gap_rel: 1e-6,
            kernel_ratio_min: 1e3,
            value_tol_rel: 1e-9,
            deriv_tol_rel: 1e-5,
            admissible_rel: 1e-6,
            admissible_margin: 1e-9,
            congruence_tol: 1e-6,
            model_kernel_tol: 1e-6,
            interlace_gap_rel: 1e-8,
            sigma_steps: 16384,
            sigma_residual_tol: 1e-6,
            cone_step: 1e-4,
            solve_residual_rel: 1e-12,
        }
    }
}

pub const DEFAULT_SAMPLES: usize = 2001;

/// A parsed run: problem, mesh, sampling density, tolerances.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub spec: ProblemSpec,
    pub mesh: Mesh,
    pub samples: usize,
    pub tol: Tolerances,
}

#[derive(Deserialize)]
struct ConfigFile {
    p: CoefficientKind,
    r: CoefficientKind,
    c: f64,
    alpha: f64,
    bc: BoundaryKind,
    n_elements: usize,
    samples: Option<usize>,
    #[serde(default)]
    tolerances: Option<Tolerances>,
}

/// Parse a JSON problem description and validate it.
pub fn parse_problem(text: &str) -> Result<RunConfig> {
    let raw: ConfigFile =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
    let spec = ProblemSpec::new(
        CoefficientField::from_kind(raw.p)?,
        CoefficientField::from_kind(raw.r)?,
        raw.c,
        raw.alpha,
        raw.bc,
    )?;
    if raw.n_elements < spec.bc.min_elements() {
        return Err(Error::Config(format!(
            "n_elements={} too small for {}",
            raw.n_elements,
            spec.bc.label()
        )));
    }
    let samples = raw.samples.unwrap_or(DEFAULT_SAMPLES);
    if samples < 16 {
        return Err(Error::Config("samples must be at least 16".into()));
    }
    Ok(RunConfig {
        spec,
        mesh: Mesh::uniform(raw.n_elements),
        samples,
        tol: raw.tolerances.unwrap_or_default(),
    })
}
