//! Sign structure of sampled functions: dead-band sign-change counting,
//! zero location with simplicity classification, cone positivity
//! propagation for the fourth-order equation, and the sign-change
//! non-increase check for the discrete source problem.

use rand::Rng;
use serde::Serialize;

use crate::assembly::{solve_model_bvp, BvpSolution, HermiteInterpolant};
use crate::error::{Error, Result};
use crate::problem::{BoundaryKind, CoefficientField, Mesh};

/// Adjacent sign flips after dead-band quantization.
#[derive(Clone, Copy, Debug)]
pub struct SignChanges {
    pub count: usize,
    /// Every sample fell inside the dead band.
    pub degenerate: bool,
}

/// Quantize to {-, 0, +} with the given dead band, drop the zeros, count
/// adjacent flips.
pub fn count_sign_changes(samples: &[f64], value_tol: f64) -> SignChanges {
    assert!(samples.len() >= 2, "need at least two samples");
    let mut count = 0;
    let mut last = 0i8;
    for &v in samples {
        let s = if v > value_tol {
            1
        } else if v < -value_tol {
            -1
        } else {
            continue;
        };
        if last != 0 && s != last {
            count += 1;
        }
        last = s;
    }
    SignChanges { count, degenerate: last == 0 }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Zero {
    pub x: f64,
    pub simple: bool,
}

/// Interior zeros with simplicity flags, plus the dead-band sign-change
/// count and the absolute thresholds that produced them.
#[derive(Clone, Debug, Serialize)]
pub struct ZeroReport {
    pub zeros: Vec<Zero>,
    pub sign_changes: usize,
    pub degenerate: bool,
    /// Sign crossings dropped for sitting within the endpoint margin.
    pub endpoint_excluded: usize,
    pub value_tol: f64,
    pub deriv_tol: f64,
}

fn bisect(interp: &HermiteInterpolant, mut lo: f64, mut hi: f64, f_lo: f64) -> f64 {
    let lo_positive = f_lo > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = interp.eval(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Bracket sign crossings on a uniform sample grid, bisect each on the
/// interpolant, exclude crossings hugging the endpoints, merge clusters the
/// sampling cannot separate (merged zeros are never simple), and classify
/// the rest by the derivative threshold.
pub fn locate_zeros(
    interp: &HermiteInterpolant,
    samples: usize,
    value_tol_rel: f64,
    deriv_tol_rel: f64,
) -> ZeroReport {
    assert!(samples >= 16);
    let curve = interp.sample(samples);
    let max_y = curve.y.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let max_dy = curve.dy.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let value_tol = value_tol_rel * max_y;
    let deriv_tol = deriv_tol_rel * max_dy;
    let sc = count_sign_changes(&curve.y, value_tol);

    let margin = 2.0 / (samples as f64 - 1.0);
    let mut raw = Vec::new();
    let mut endpoint_excluded = 0usize;
    let mut prev: Option<usize> = None;
    for i in 0..samples {
        let v = curve.y[i];
        if v.abs() <= value_tol {
            continue;
        }
        if let Some(j) = prev {
            if (curve.y[j] > 0.0) != (v > 0.0) {
                let x0 = bisect(interp, curve.xs[j], curve.xs[i], curve.y[j]);
                if x0 <= margin || x0 >= 1.0 - margin {
                    endpoint_excluded += 1;
                } else {
                    raw.push(x0);
                }
            }
        }
        prev = Some(i);
    }

    let mut zeros: Vec<Zero> = Vec::new();
    let mut k = 0;
    while k < raw.len() {
        let mut j = k + 1;
        while j < raw.len() && raw[j] - raw[j - 1] < margin {
            j += 1;
        }
        if j - k == 1 {
            let x = raw[k];
            zeros.push(Zero { x, simple: interp.eval_d(x).abs() >= deriv_tol });
        } else {
            let x = raw[k..j].iter().sum::<f64>() / (j - k) as f64;
            zeros.push(Zero { x, simple: false });
        }
        k = j;
    }

    ZeroReport {
        zeros,
        sign_changes: sc.count,
        degenerate: sc.degenerate,
        endpoint_excluded,
        value_tol,
        deriv_tol,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeDirection {
    Forward,
    Backward,
}

/// Base point and quadruple (y, y', py'', (py'')') entering one of the two
/// positivity cones.
#[derive(Clone, Copy, Debug)]
pub struct ConeState {
    pub a: f64,
    pub y: f64,
    pub dy: f64,
    pub v: f64,
    pub dv: f64,
    pub direction: ConeDirection,
}

impl ConeState {
    pub fn validate(&self) -> Result<()> {
        if self.y == 0.0 && self.dy == 0.0 && self.v == 0.0 && self.dv == 0.0 {
            return Err(Error::TrivialInitialState);
        }
        match self.direction {
            ConeDirection::Forward => {
                if !(0.0..1.0).contains(&self.a) {
                    return Err(Error::Hypothesis(format!(
                        "forward base point {} outside [0,1)",
                        self.a
                    )));
                }
                if self.y < 0.0 || self.dy < 0.0 || self.v < 0.0 || self.dv < 0.0 {
                    return Err(Error::Hypothesis(
                        "forward cone needs nonnegative (y, y', py'', (py'')')".into(),
                    ));
                }
            }
            ConeDirection::Backward => {
                if !(self.a > 0.0 && self.a <= 1.0) {
                    return Err(Error::Hypothesis(format!(
                        "backward base point {} outside (0,1]",
                        self.a
                    )));
                }
                if self.y < 0.0 || self.dy > 0.0 || self.v < 0.0 || self.dv > 0.0 {
                    return Err(Error::Hypothesis(
                        "backward cone needs signs (+,-,+,-) in (y, y', py'', (py'')')".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Far-endpoint quadruple of the cone propagation with its strict sign
/// verdict.
#[derive(Clone, Copy, Debug)]
pub struct ConeCheck {
    /// (y, y', py'', (py'')') at x=1 (forward) or x=0 (backward).
    pub endpoint: [f64; 4],
    pub strict: bool,
}

fn rk4_step4(
    x: f64,
    s: [f64; 4],
    h: f64,
    f: &impl Fn(f64, [f64; 4]) -> [f64; 4],
) -> [f64; 4] {
    let add = |a: [f64; 4], b: [f64; 4], c: f64| {
        [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2], a[3] + c * b[3]]
    };
    let k1 = f(x, s);
    let k2 = f(x + 0.5 * h, add(s, k1, 0.5 * h));
    let k3 = f(x + 0.5 * h, add(s, k2, 0.5 * h));
    let k4 = f(x + h, add(s, k3, h));
    let mut out = s;
    for i in 0..4 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Integrate (py'')'' = ry from the base point to the far endpoint and
/// report whether the strict cone inequalities hold there.
pub fn disconjugacy_check(
    p: &CoefficientField,
    r: &CoefficientField,
    state: &ConeState,
    step: f64,
) -> Result<ConeCheck> {
    state.validate()?;
    assert!(step > 0.0 && step <= 0.1, "step must be small and positive");
    let deriv = |x: f64, s: [f64; 4]| {
        let xc = x.clamp(0.0, 1.0);
        [s[1], s[2] / p.eval_raw(xc), s[3], r.eval_raw(xc) * s[0]]
    };
    let (target, dir) = match state.direction {
        ConeDirection::Forward => (1.0, 1.0),
        ConeDirection::Backward => (0.0, -1.0),
    };
    let len = (target - state.a).abs();
    let n = (len / step).ceil().max(1.0) as usize;
    let h = dir * len / n as f64;
    let mut s = [state.y, state.dy, state.v, state.dv];
    for i in 0..n {
        s = rk4_step4(state.a + i as f64 * h, s, h, &deriv);
    }
    let strict = match state.direction {
        ConeDirection::Forward => s.iter().all(|&c| c > 0.0),
        ConeDirection::Backward => s[0] > 0.0 && s[1] < 0.0 && s[2] > 0.0 && s[3] < 0.0,
    };
    Ok(ConeCheck { endpoint: s, strict })
}

/// Sign-change comparison between the load of the discrete source problem
/// and its solution.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NonIncreaseCheck {
    pub input_changes: usize,
    pub output_changes: usize,
    pub pass: bool,
}

/// Solve the source problem for `f` and compare dead-band sign-change
/// counts of load and solution. Requires a nonnegative end-mass parameter;
/// the property does not hold without it.
pub fn signchange_noninc_check(
    p: &CoefficientField,
    r: &CoefficientField,
    alpha: f64,
    bc: BoundaryKind,
    mesh: &Mesh,
    f: impl Fn(f64) -> f64,
    samples: usize,
    value_tol_rel: f64,
) -> Result<(NonIncreaseCheck, BvpSolution)> {
    if alpha < 0.0 {
        return Err(Error::Hypothesis(format!(
            "sign-change non-increase needs alpha >= 0, got {alpha}"
        )));
    }
    let n = samples.max(16);
    let sol = solve_model_bvp(p, r, alpha, bc, mesh, &f)?;
    let f_in: Vec<f64> = (0..n).map(|i| f(i as f64 / (n - 1) as f64)).collect();
    let max_f = f_in.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let input_changes = count_sign_changes(&f_in, value_tol_rel * max_f).count;
    let out = sol.interpolant.sample(n);
    let max_y = out.y.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let output_changes = count_sign_changes(&out.y, value_tol_rel * max_y).count;
    let check = NonIncreaseCheck {
        input_changes,
        output_changes,
        pass: output_changes <= input_changes,
    };
    Ok((check, sol))
}

/// Random quadratic bounded away from zero on [0,1], for property suites.
pub fn random_positive_poly(rng: &mut impl Rng) -> CoefficientField {
    let a = rng.gen_range(0.5..2.0);
    let b = rng.gen_range(-0.2 * a..0.2 * a);
    let c = rng.gen_range(-0.2 * a..0.2 * a);
    CoefficientField::poly(vec![a, b, c]).expect("finite coefficients")
}

/// Random state in the forward cone, bounded away from the trivial corner.
pub fn random_forward_state(rng: &mut impl Rng) -> ConeState {
    let mut q = [0.0f64; 4];
    for c in &mut q {
        *c = rng.gen_range(0.0..1.0);
    }
    if q.iter().sum::<f64>() < 1e-3 {
        q[0] += 1.0;
    }
    ConeState {
        a: rng.gen_range(0.0..0.9),
        y: q[0],
        dy: q[1],
        v: q[2],
        dv: q[3],
        direction: ConeDirection::Forward,
    }
}
