//! The α-projection layer.
//!
//! A point `s` produced by the policy network is pulled toward a fixed
//! interior anchor `y0` along the segment joining them, stopping at the
//! largest `alpha ∈ [0, 1]` for which `alpha·s + (1 − alpha)·y0` satisfies
//! every row of `A·y <= b`. Each row yields a closed-form upper bound on
//! `alpha`, so the forward pass is a single sweep over the rows and the
//! backward pass only needs the rows that attain the minimum.
//!
//! The simplex equality `Σ y = 1` is never a row. Inputs come from a
//! softmax, the anchor lies on the simplex, and a convex combination of two
//! simplex points stays on it.

mod simplex;

pub use simplex::{solve_lp, LinearProgram, LpError, LpSolution, SimplexWorkspace};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tie tolerance used when collecting the rows that attain `alpha`.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Inward offset (relative to `1 + |b|`) of the face an infeasible point is
/// projected onto, so rounding in later arithmetic cannot push it outside.
pub const BOUNDARY_MARGIN: f64 = 1e-12;

/// Radius below which a Chebyshev ball is treated as empty.
pub const MIN_RADIUS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProjectionError {
    #[error("anchor is not strictly interior: row {row} has slack {slack:e}")]
    NonInteriorAnchor { row: usize, slack: f64 },
    #[error("polytope has no interior (chebyshev radius {radius:e})")]
    EmptyInterior { radius: f64 },
    #[error("polytope is unbounded")]
    Unbounded,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// `A·y <= b` over the team simplex, with a cached strictly interior anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    dim: usize,
    rows: Vec<Vec<f64>>,
    bounds: Vec<f64>,
    anchor: Vec<f64>,
    radius: f64,
    #[serde(skip)]
    anchor_dots: Vec<f64>,
}

impl Polytope {
    /// Builds the polytope and anchors it at the Chebyshev centre of its
    /// intersection with the probability simplex.
    pub fn new(dim: usize, rows: Vec<Vec<f64>>, bounds: Vec<f64>) -> Result<Self, ProjectionError> {
        check_rows(dim, &rows, &bounds)?;
        let center = chebyshev_center(dim, &rows, &bounds)?;
        Self::with_anchor(rows, bounds, center.point, center.radius)
    }

    /// Uses a caller-supplied anchor, which must satisfy every row strictly.
    pub fn with_anchor(rows: Vec<Vec<f64>>, bounds: Vec<f64>, anchor: Vec<f64>, radius: f64) -> Result<Self, ProjectionError> {
        let dim = anchor.len();
        check_rows(dim, &rows, &bounds)?;
        let anchor_dots: Vec<f64> = rows.iter().map(|a| dot(a, &anchor)).collect();
        for (i, (ad, b)) in anchor_dots.iter().zip(&bounds).enumerate() {
            if b - ad <= 0.0 {
                return Err(ProjectionError::NonInteriorAnchor { row: i, slack: b - ad });
            }
        }
        Ok(Polytope { dim, rows, bounds, anchor, radius, anchor_dots })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn chebyshev_radius(&self) -> f64 {
        self.radius
    }

    /// Largest `a_i·y − b_i` over the rows (negative when strictly inside).
    pub fn max_violation(&self, y: &[f64]) -> f64 {
        self.rows.iter().zip(&self.bounds).map(|(a, b)| dot(a, y) - b).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        is_feasible(y, self, tol)
    }

    /// Rebuilds the cached `a_i·y0` products after deserialisation.
    pub fn restore_cache(&mut self) {
        self.anchor_dots = self.rows.iter().map(|a| dot(a, &self.anchor)).collect();
    }

    /// Where row `i` is hit by the projection: `b_i` pulled in by the
    /// margin, but never past half the anchor's slack.
    fn target(&self, i: usize) -> f64 {
        let b = self.bounds[i];
        let slack = b - self.anchor_dot(i);
        b - (BOUNDARY_MARGIN * (1.0 + b.abs())).min(0.5 * slack)
    }

    fn anchor_dot(&self, i: usize) -> f64 {
        match self.anchor_dots.get(i) {
            Some(v) => *v,
            None => dot(&self.rows[i], &self.anchor),
        }
    }
}

fn check_rows(dim: usize, rows: &[Vec<f64>], bounds: &[f64]) -> Result<(), ProjectionError> {
    if rows.len() != bounds.len() {
        return Err(ProjectionError::Dimension { expected: rows.len(), got: bounds.len() });
    }
    if let Some(r) = rows.iter().find(|r| r.len() != dim) {
        return Err(ProjectionError::Dimension { expected: dim, got: r.len() });
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// True iff `A·y <= b + tol` on every row.
pub fn is_feasible(y: &[f64], poly: &Polytope, tol: f64) -> bool {
    y.len() == poly.dim && poly.rows.iter().zip(&poly.bounds).all(|(a, b)| dot(a, y) <= b + tol)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    out
}

pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Vector-Jacobian product of the softmax at output `s`.
pub fn softmax_backward(s: &[f64], upstream: &[f64]) -> Vec<f64> {
    let inner = dot(s, upstream);
    s.iter().zip(upstream).map(|(si, gi)| si * (gi - inner)).collect()
}

/// A bound that attains `alpha` in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TightBound {
    /// The constant bound `alpha <= 1`.
    Unit,
    Row(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub y: Vec<f64>,
    pub alpha: f64,
    pub tight: Vec<TightBound>,
}

/// Forward pass of the α-projection. Infeasible points land
/// [`BOUNDARY_MARGIN`] inside the face that stops them.
pub fn alpha_forward(s: &[f64], poly: &Polytope) -> Result<ProjectionResult, ProjectionError> {
    if s.len() != poly.dim {
        return Err(ProjectionError::Dimension { expected: poly.dim, got: s.len() });
    }
    let mut bounds = Vec::with_capacity(poly.rows.len());
    let mut alpha = 1.0f64;
    for (i, (a, b)) in poly.rows.iter().zip(&poly.bounds).enumerate() {
        let ay0 = poly.anchor_dot(i);
        let slack = b - ay0;
        if slack <= 0.0 {
            return Err(ProjectionError::NonInteriorAnchor { row: i, slack });
        }
        let as_ = dot(a, s);
        let d = as_ - ay0;
        if d > 0.0 {
            let mut u = (poly.target(i) - ay0) / d;
            // A row already satisfied by `s` cannot bound alpha below 1.
            if as_ <= *b {
                u = u.max(1.0);
            }
            alpha = alpha.min(u);
            bounds.push((i, u));
        }
    }
    let tol = TIE_TOLERANCE * alpha.abs().max(1.0);
    let mut tight = Vec::new();
    if 1.0 - alpha <= tol {
        tight.push(TightBound::Unit);
    }
    tight.extend(bounds.iter().filter(|(_, u)| u - alpha <= tol).map(|&(i, _)| TightBound::Row(i)));

    let y = if alpha == 1.0 {
        s.to_vec()
    } else {
        s.iter().zip(&poly.anchor).map(|(si, y0)| alpha * si + (1.0 - alpha) * y0).collect()
    };
    Ok(ProjectionResult { y, alpha, tight })
}

/// Gradient of `alpha` with respect to `s`, averaged over the tight set.
pub fn alpha_gradient(s: &[f64], poly: &Polytope, fwd: &ProjectionResult) -> Vec<f64> {
    let mut grad = vec![0.0; poly.dim];
    if fwd.tight.is_empty() {
        return grad;
    }
    for t in &fwd.tight {
        if let TightBound::Row(i) = *t {
            let a = &poly.rows[i];
            let ay0 = poly.anchor_dot(i);
            let d = dot(a, s) - ay0;
            let u = (poly.target(i) - ay0) / d;
            let scale = -u / d;
            for (g, ai) in grad.iter_mut().zip(a) {
                *g += scale * ai;
            }
        }
    }
    let k = fwd.tight.len() as f64;
    grad.iter_mut().for_each(|g| *g /= k);
    grad
}

/// Backward pass: given `dL/dy`, returns `dL/ds`.
///
/// `y = alpha(s)·s + (1 − alpha(s))·y0`, so
/// `dy/ds = alpha·I + (s − y0)·∇alphaᵀ`.
pub fn alpha_backward(s: &[f64], poly: &Polytope, fwd: &ProjectionResult, upstream: &[f64]) -> Vec<f64> {
    let grad_alpha = alpha_gradient(s, poly, fwd);
    let along: f64 = upstream.iter().zip(s.iter().zip(&poly.anchor)).map(|(g, (si, y0))| g * (si - y0)).sum();
    upstream.iter().zip(&grad_alpha).map(|(g, ga)| fwd.alpha * g + along * ga).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevCenter {
    pub point: Vec<f64>,
    pub radius: f64,
}

/// Chebyshev centre of `{y : A·y <= b, Σ y = 1}` measured inside the
/// simplex's affine hull.
///
/// The last coordinate is eliminated through the equality. The distance
/// from a point of the hyperplane `Σ y = 1` to the face `a·y = b` within
/// that hyperplane is `(b − a·y) / ‖P a‖`, where `P` removes the component
/// of `a` along the all-ones direction.
pub fn chebyshev_center(dim: usize, rows: &[Vec<f64>], bounds: &[f64]) -> Result<ChebyshevCenter, ProjectionError> {
    check_rows(dim, rows, bounds)?;
    if dim == 0 {
        return Err(ProjectionError::Dimension { expected: 1, got: 0 });
    }
    if dim == 1 {
        // The simplex is the single point {1}.
        let slack = rows.iter().zip(bounds).map(|(a, b)| b - a[0]).fold(f64::INFINITY, f64::min);
        return if slack >= 0.0 {
            Ok(ChebyshevCenter { point: vec![1.0], radius: 0.0 })
        } else {
            Err(ProjectionError::EmptyInterior { radius: 0.0 })
        };
    }
    let reduced = dim - 1;
    // Variables: y_0 .. y_{n-2} (free), r (free). Maximise r.
    let mut objective = vec![0.0; dim];
    objective[reduced] = 1.0;
    let mut lp = LinearProgram::maximize(objective);
    for j in 0..dim {
        lp.free(j);
    }
    let mut any_direction = false;
    for (a, b) in rows.iter().zip(bounds) {
        let last = a[reduced];
        let mean = a.iter().sum::<f64>() / dim as f64;
        let norm = a.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>().sqrt();
        if norm > 1e-14 {
            any_direction = true;
        }
        let mut row: Vec<f64> = a[..reduced].iter().map(|v| v - last).collect();
        row.push(norm);
        lp.le(row, b - last);
    }
    if !any_direction {
        return Err(ProjectionError::Unbounded);
    }
    let sol = match solve_lp(&lp) {
        Ok(sol) => sol,
        Err(LpError::Infeasible) => return Err(ProjectionError::EmptyInterior { radius: f64::NEG_INFINITY }),
        Err(LpError::Unbounded) => return Err(ProjectionError::Unbounded),
        Err(e) => return Err(e.into()),
    };
    let radius = sol.x[reduced];
    if radius <= MIN_RADIUS {
        return Err(ProjectionError::EmptyInterior { radius });
    }
    let mut point: Vec<f64> = sol.x[..reduced].to_vec();
    point.push(1.0 - point.iter().sum::<f64>());
    Ok(ChebyshevCenter { point, radius })
}

/// Chebyshev centre of `{y : A·y <= b}` in the full space, without the
/// simplex restriction.
pub fn chebyshev_center_unrestricted(dim: usize, rows: &[Vec<f64>], bounds: &[f64]) -> Result<ChebyshevCenter, ProjectionError> {
    check_rows(dim, rows, bounds)?;
    let mut objective = vec![0.0; dim + 1];
    objective[dim] = 1.0;
    let mut lp = LinearProgram::maximize(objective);
    for j in 0..=dim {
        lp.free(j);
    }
    for (a, b) in rows.iter().zip(bounds) {
        let mut row = a.clone();
        row.push(dot(a, a).sqrt());
        lp.le(row, *b);
    }
    let sol = match solve_lp(&lp) {
        Ok(sol) => sol,
        Err(LpError::Infeasible) => return Err(ProjectionError::EmptyInterior { radius: f64::NEG_INFINITY }),
        Err(LpError::Unbounded) => return Err(ProjectionError::Unbounded),
        Err(e) => return Err(e.into()),
    };
    let radius = sol.x[dim];
    if radius <= MIN_RADIUS {
        return Err(ProjectionError::EmptyInterior { radius });
    }
    Ok(ChebyshevCenter { point: sol.x[..dim].to_vec(), radius })
}

/// Non-negativity rows `-y_t <= 0` for an `n`-team simplex.
pub fn nonnegativity_rows(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let rows = (0..n)
        .map(|t| {
            let mut r = vec![0.0; n];
            r[t] = -1.0;
            r
        })
        .collect();
    (rows, vec![0.0; n])
}

/// The full probability simplex as a polytope.
pub fn simplex_polytope(n: usize) -> Result<Polytope, ProjectionError> {
    let (rows, bounds) = nonnegativity_rows(n);
    Polytope::new(n, rows, bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_box() -> Polytope {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]];
        Polytope::with_anchor(rows, vec![1.0, 1.0, 0.0, 0.0], vec![0.5, 0.5], 0.5).unwrap()
    }

    #[test]
    fn softmax_cases() {
        let s = softmax(&[0.0, 0.0, 0.0]);
        for v in &s {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
        let s = softmax(&[1000.0, 0.0]);
        assert_abs_diff_eq!(s[0], 1.0, epsilon = 1e-15);
        assert!(s[1] >= 0.0 && s[1] < 1e-300);
        let s = softmax(&[2f64.ln(), 0.0]);
        assert_abs_diff_eq!(s[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn box_projection_hand_example() {
        // alpha·(2 − 0.5) <= 1 − 0.5  =>  alpha = 1/3, less the margin.
        let poly = unit_box();
        let out = alpha_forward(&[2.0, 0.5], &poly).unwrap();
        assert_abs_diff_eq!(out.alpha, 1.0 / 3.0, epsilon = 1e-11);
        assert!(out.y[0] < 1.0);
        assert_abs_diff_eq!(out.y[0], 1.0, epsilon = 1e-11);
        assert_abs_diff_eq!(out.y[1], 0.5, epsilon = 1e-15);
        assert_eq!(out.tight, vec![TightBound::Row(0)]);
    }

    #[test]
    fn interior_and_anchor_are_fixed_points() {
        let poly = unit_box();
        let s = [0.3, 0.9];
        let out = alpha_forward(&s, &poly).unwrap();
        assert_eq!(out.alpha, 1.0);
        assert_eq!(out.y, s.to_vec());
        assert_eq!(out.tight, vec![TightBound::Unit]);

        let out = alpha_forward(&[0.5, 0.5], &poly).unwrap();
        assert_eq!(out.alpha, 1.0);
        assert_eq!(out.y, vec![0.5, 0.5]);
    }

    #[test]
    fn backward_identity_and_zero_upstream() {
        let poly = unit_box();
        let s = [0.3, 0.9];
        let fwd = alpha_forward(&s, &poly).unwrap();
        assert_eq!(alpha_backward(&s, &poly, &fwd, &[0.7, -1.3]), vec![0.7, -1.3]);

        let s = [2.0, 0.5];
        let fwd = alpha_forward(&s, &poly).unwrap();
        assert_eq!(alpha_backward(&s, &poly, &fwd, &[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn backward_matches_finite_differences_on_box() {
        let poly = unit_box();
        let s = [2.0, 0.5];
        let fwd = alpha_forward(&s, &poly).unwrap();
        let h = 1e-6;
        for (k, upstream) in [[1.0, 0.0], [0.0, 1.0]].iter().enumerate() {
            let g = alpha_backward(&s, &poly, &fwd, upstream);
            for j in 0..2 {
                let mut sp = s;
                let mut sm = s;
                sp[j] += h;
                sm[j] -= h;
                let fp = alpha_forward(&sp, &poly).unwrap().y[k];
                let fm = alpha_forward(&sm, &poly).unwrap().y[k];
                let fd = (fp - fm) / (2.0 * h);
                let rel = (g[j] - fd).abs() / fd.abs().max(1e-8);
                assert!(rel <= 1e-5 || (g[j] - fd).abs() < 1e-9, "d y{k}/d s{j}: {} vs {fd}", g[j]);
            }
        }
    }

    #[test]
    fn non_interior_anchor_is_rejected() {
        let rows = vec![vec![1.0, 0.0]];
        assert!(matches!(
            Polytope::with_anchor(rows, vec![0.5], vec![0.5, 0.5], 0.0),
            Err(ProjectionError::NonInteriorAnchor { row: 0, .. })
        ));
    }

    #[test]
    fn feasibility_with_tolerance() {
        let poly = unit_box();
        let tol = 1e-9;
        assert!(is_feasible(&[0.5, 0.5], &poly, tol));
        assert!(!is_feasible(&[1.0 + 2.0 * tol, 0.0], &poly, tol));
        assert!(is_feasible(&[1.0, 0.0], &poly, 0.0));
    }

    #[test]
    fn unit_box_center() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]];
        let c = chebyshev_center_unrestricted(2, &rows, &[1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(c.point[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(c.point[1], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(c.radius, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn full_simplex_center_is_uniform() {
        let poly = simplex_polytope(3).unwrap();
        for v in poly.anchor() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-9);
        }
        // Distance from the centroid to an edge of the standard 2-simplex.
        assert_abs_diff_eq!(poly.chebyshev_radius(), 1.0 / 6f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn empty_polytope_is_reported() {
        // y_0 >= 1.5 cannot hold on the simplex.
        let rows = vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![-1.0, 0.0]];
        assert!(matches!(chebyshev_center(2, &rows, &[0.0, 0.0, -1.5]), Err(ProjectionError::EmptyInterior { .. })));
        // A single point has no interior.
        let rows = vec![vec![-1.0, 0.0], vec![1.0, 0.0]];
        assert!(matches!(chebyshev_center(2, &rows, &[-0.5, 0.5]), Err(ProjectionError::EmptyInterior { .. })));
    }
}
