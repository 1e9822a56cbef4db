//! Exponential integrals over simplices, polytopes and their boundaries.
//!
//! For a `d`-simplex `S` with vertices `v_0..v_d` and mass `m` (Lebesgue
//! volume, or `dσ`-mass for boundary cells)
//!
//! ```text
//! ∫_S e^{-⟨x, η⟩} = d! · m · dd[a_0, …, a_d](exp),   a_i = -⟨v_i, η⟩,
//! ```
//!
//! where `dd` is the divided difference. Products of linear forms are
//! obtained by differentiating in the nodes, which only appends repeated
//! nodes:
//!
//! ```text
//! ∫_S ℓ_1⋯ℓ_k e^{-⟨x, η⟩} = d! · m · Σ_{i_1..i_k} Π_j ℓ_j(v_{i_j}) · Π mult! · dd[a, a_{i_1}, …, a_{i_k}].
//! ```
//!
//! Divided differences are evaluated on sorted nodes: contiguous ranges whose
//! spread is at most [`TAYLOR_SPREAD`] use a Taylor series around their mean,
//! wider ranges use the two-term recurrence, which then never divides by a
//! gap smaller than the threshold.

use std::collections::HashMap;
use std::ops::Deref;

use thiserror::Error;

use crate::polytope::{BoundaryCell, PlFunction, Polytope, PolytopeError, Simplex};

/// Largest node spread handled by the Taylor path.
pub const TAYLOR_SPREAD: f64 = 1.0;
/// Number of Taylor terms; `1/24!` is far below double precision for
/// centered nodes of magnitude at most `TAYLOR_SPREAD`.
const TAYLOR_TERMS: usize = 24;
/// Nodes beyond this magnitude would overflow or flush `exp` to zero.
pub const MAX_NODE: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExpIntError {
    #[error("exponent {node} is outside the double range (|node| > {MAX_NODE})")]
    Overflow { node: f64 },
    #[error("dimension mismatch: covector has {got} entries, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite covector entry")]
    NonFinite,
    #[error("Brion perturbation could not escape the pole arrangement")]
    DegenerateDirection,
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
}

/// A real covector, read as the linear function `x ↦ ⟨x, ξ_eff⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct Covector(Vec<f64>);

impl Covector {
    pub fn new(entries: Vec<f64>) -> Result<Self, ExpIntError> {
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(ExpIntError::NonFinite);
        }
        Ok(Self(entries))
    }

    pub fn zero(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Covector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DividedDifference,
    TaylorCluster,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ExpIntegralResult {
    pub value: f64,
    pub method: Method,
    /// Worst amplification `(|a| + |b|) / |a - b|` over the recurrence
    /// steps; 1 for a pure Taylor evaluation.
    pub condition_estimate: f64,
}

/// Affine function `x ↦ ⟨gradient, x⟩ + constant` with real coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub gradient: Vec<f64>,
    pub constant: f64,
}

impl AffineForm {
    pub fn new(gradient: Vec<f64>, constant: f64) -> Self {
        Self { gradient, constant }
    }

    pub fn linear(gradient: Vec<f64>) -> Self {
        Self { gradient, constant: 0.0 }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.gradient, x) + self.constant
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_nodes(nodes: &[f64]) -> Result<(), ExpIntError> {
    for &a in nodes {
        if !a.is_finite() || a.abs() > MAX_NODE {
            return Err(ExpIntError::Overflow { node: a });
        }
    }
    Ok(())
}

/// Divided difference of `exp` on already sorted nodes by the centered
/// Taylor series `e^c Σ_k h_k(z - c) / (m + k)!`.
pub fn dd_exp_taylor(nodes: &[f64]) -> f64 {
    let m = nodes.len() - 1;
    let c = nodes.iter().sum::<f64>() / nodes.len() as f64;
    let mut h = [0.0f64; TAYLOR_TERMS + 1];
    h[0] = 1.0;
    for &z in nodes {
        let w = z - c;
        for k in 1..=TAYLOR_TERMS {
            h[k] += w * h[k - 1];
        }
    }
    let mut inv_fact = 1.0;
    for j in 2..=m {
        inv_fact /= j as f64;
    }
    let mut sum = 0.0;
    for (k, hk) in h.iter().enumerate() {
        if k > 0 {
            inv_fact /= (m + k) as f64;
        }
        sum += hk * inv_fact;
    }
    c.exp() * sum
}

/// Divided difference of `exp` by the two-term recurrence, switching to the
/// Taylor series on ranges with spread at most `taylor_spread`.
fn dd_exp_recurrence(sorted: &[f64], taylor_spread: f64) -> (f64, f64) {
    let len = sorted.len();
    let mut table = vec![0.0f64; len * len];
    let mut cond: f64 = 1.0;
    for width in 0..len {
        for i in 0..(len - width) {
            let j = i + width;
            let spread = sorted[j] - sorted[i];
            table[i * len + j] = if width == 0 {
                sorted[i].exp()
            } else if spread <= taylor_spread {
                dd_exp_taylor(&sorted[i..=j])
            } else {
                let hi = table[(i + 1) * len + j];
                let lo = table[i * len + (j - 1)];
                let diff = hi - lo;
                if diff != 0.0 {
                    cond = cond.max((hi.abs() + lo.abs()) / diff.abs());
                }
                diff / spread
            };
        }
    }
    (table[len - 1], cond)
}

/// Divided difference `dd[a_0, …, a_m](exp)` with repeated nodes allowed.
pub fn dd_exp(nodes: &[f64]) -> Result<ExpIntegralResult, ExpIntError> {
    check_nodes(nodes)?;
    let mut sorted = nodes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let spread = sorted[sorted.len() - 1] - sorted[0];
    if spread <= TAYLOR_SPREAD {
        return Ok(ExpIntegralResult {
            value: dd_exp_taylor(&sorted),
            method: Method::TaylorCluster,
            condition_estimate: 1.0,
        });
    }
    let (value, cond) = dd_exp_recurrence(&sorted, TAYLOR_SPREAD);
    Ok(ExpIntegralResult { value, method: Method::DividedDifference, condition_estimate: cond })
}

/// Same quantity through the recurrence only (no Taylor ranges), valid for
/// pairwise distinct nodes. Exposed to compare the two paths near the
/// switching threshold.
pub fn dd_exp_plain(nodes: &[f64]) -> Result<f64, ExpIntError> {
    check_nodes(nodes)?;
    let mut sorted = nodes.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(dd_exp_recurrence(&sorted, 0.0).0)
}

/// Weights for the moments of one cell: `W[M] = Π mult! · dd[a ∪ M]` for
/// every multiset `M` of vertex indices, computed on demand.
pub(crate) struct CellKernel<'a> {
    points: &'a [Vec<f64>],
    nodes: Vec<f64>,
    scale: f64,
    cache: HashMap<Vec<usize>, f64>,
    condition: f64,
    method: Method,
}

impl<'a> CellKernel<'a> {
    /// `measure` is the cell's mass; the `d!` factor is applied here.
    pub(crate) fn new(points: &'a [Vec<f64>], measure: f64, eta: &[f64]) -> Result<Self, ExpIntError> {
        let d = points.len() - 1;
        let nodes: Vec<f64> = points.iter().map(|v| -dot(v, eta)).collect();
        check_nodes(&nodes)?;
        let fact: f64 = (1..=d).map(|k| k as f64).product();
        Ok(Self {
            points,
            nodes,
            scale: fact * measure,
            cache: HashMap::new(),
            condition: 1.0,
            method: Method::TaylorCluster,
        })
    }

    fn weight(&mut self, key: &[usize]) -> Result<f64, ExpIntError> {
        if let Some(w) = self.cache.get(key) {
            return Ok(*w);
        }
        let mut nodes = self.nodes.clone();
        nodes.extend(key.iter().map(|&i| self.nodes[i]));
        let r = dd_exp(&nodes)?;
        self.condition = self.condition.max(r.condition_estimate);
        if r.method == Method::DividedDifference {
            self.method = Method::DividedDifference;
        }
        let mut mult = 1.0;
        let mut run = 1;
        for w in key.windows(2) {
            if w[0] == w[1] {
                run += 1;
                mult *= run as f64;
            } else {
                run = 1;
            }
        }
        let w = mult * r.value;
        self.cache.insert(key.to_vec(), w);
        Ok(w)
    }

    /// `∫ ℓ_1⋯ℓ_k e^{-⟨x, η⟩}` over the cell for linear forms `ℓ_j`.
    pub(crate) fn linear_moment(&mut self, forms: &[&[f64]]) -> Result<f64, ExpIntError> {
        let k = forms.len();
        let len = self.points.len();
        if k == 0 {
            return Ok(self.scale * self.weight(&[])?);
        }
        let values: Vec<Vec<f64>> = forms
            .iter()
            .map(|f| self.points.iter().map(|v| dot(v, f)).collect())
            .collect();
        let mut idx = vec![0usize; k];
        let mut sum = 0.0;
        loop {
            let prod: f64 = (0..k).map(|j| values[j][idx[j]]).product();
            if prod != 0.0 {
                let mut key = idx.clone();
                key.sort_unstable();
                sum += prod * self.weight(&key)?;
            }
            // odometer increment
            let mut pos = 0;
            loop {
                if pos == k {
                    return Ok(self.scale * sum);
                }
                idx[pos] += 1;
                if idx[pos] < len {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    }

    /// `∫ Π_j (⟨x, g_j⟩ + c_j) e^{-⟨x, η⟩}` by expanding the product.
    pub(crate) fn affine_moment(&mut self, forms: &[&AffineForm]) -> Result<f64, ExpIntError> {
        let k = forms.len();
        let mut total = 0.0;
        for mask in 0..(1usize << k) {
            let mut coeff = 1.0;
            let mut lin: Vec<&[f64]> = Vec::new();
            for (j, f) in forms.iter().enumerate() {
                if mask & (1 << j) != 0 {
                    lin.push(&f.gradient);
                } else {
                    coeff *= f.constant;
                }
            }
            if coeff != 0.0 {
                total += coeff * self.linear_moment(&lin)?;
            }
        }
        Ok(total)
    }
}

fn check_dim(n: usize, eta: &[f64]) -> Result<(), ExpIntError> {
    if eta.len() != n {
        return Err(ExpIntError::DimensionMismatch { expected: n, got: eta.len() });
    }
    if eta.iter().any(|x| !x.is_finite()) {
        return Err(ExpIntError::NonFinite);
    }
    Ok(())
}

fn is_zero(eta: &[f64]) -> bool {
    eta.iter().all(|&x| x == 0.0)
}

/// `∫_S e^{-⟨x, ξ_eff⟩} dx` with method and conditioning.
pub fn simplex_exp_detailed(s: &Simplex, xi_eff: &[f64]) -> Result<ExpIntegralResult, ExpIntError> {
    check_dim(s.dim(), xi_eff)?;
    if is_zero(xi_eff) {
        return Ok(ExpIntegralResult {
            value: s.volume_f64(),
            method: Method::TaylorCluster,
            condition_estimate: 1.0,
        });
    }
    let mut k = CellKernel::new(s.points_f64(), s.volume_f64(), xi_eff)?;
    let value = k.linear_moment(&[])?;
    Ok(ExpIntegralResult { value, method: k.method, condition_estimate: k.condition })
}

pub fn simplex_exp(s: &Simplex, xi_eff: &[f64]) -> Result<f64, ExpIntError> {
    Ok(simplex_exp_detailed(s, xi_eff)?.value)
}

/// `∫_S ℓ(x) e^{-⟨x, ξ_eff⟩} dx`.
pub fn simplex_exp_affine(s: &Simplex, xi_eff: &[f64], l: &AffineForm) -> Result<f64, ExpIntError> {
    check_dim(s.dim(), xi_eff)?;
    if is_zero(xi_eff) {
        let b: Vec<f64> = s.barycenter().iter().map(crate::exact::to_f64).collect();
        return Ok(s.volume_f64() * l.eval(&b));
    }
    CellKernel::new(s.points_f64(), s.volume_f64(), xi_eff)?.affine_moment(&[l])
}

pub fn polytope_exp(p: &Polytope, xi_eff: &[f64]) -> Result<f64, ExpIntError> {
    check_dim(p.dim(), xi_eff)?;
    if is_zero(xi_eff) {
        return Ok(p.volume_f64());
    }
    p.simplices().iter().try_fold(0.0, |acc, s| Ok(acc + simplex_exp(s, xi_eff)?))
}

/// `∫_P e^{-⟨x, ξ_eff⟩}` over an explicit list of simplices, summed in order.
pub fn simplices_exp(simplices: &[Simplex], xi_eff: &[f64]) -> Result<f64, ExpIntError> {
    simplices.iter().try_fold(0.0, |acc, s| Ok(acc + simplex_exp(s, xi_eff)?))
}

pub fn polytope_exp_detailed(p: &Polytope, xi_eff: &[f64]) -> Result<ExpIntegralResult, ExpIntError> {
    check_dim(p.dim(), xi_eff)?;
    let mut value = 0.0;
    let mut cond: f64 = 1.0;
    let mut method = Method::TaylorCluster;
    for s in p.simplices() {
        let r = simplex_exp_detailed(s, xi_eff)?;
        value += r.value;
        cond = cond.max(r.condition_estimate);
        if r.method == Method::DividedDifference {
            method = Method::DividedDifference;
        }
    }
    Ok(ExpIntegralResult { value, method, condition_estimate: cond })
}

pub fn polytope_exp_affine(p: &Polytope, xi_eff: &[f64], l: &AffineForm) -> Result<f64, ExpIntError> {
    check_dim(p.dim(), xi_eff)?;
    p.simplices().iter().try_fold(0.0, |acc, s| Ok(acc + simplex_exp_affine(s, xi_eff, l)?))
}

fn piece_form(q: &PlFunction, i: usize) -> AffineForm {
    let p = &q.pieces[i];
    AffineForm::new(p.gradient_f64(), p.constant_f64())
}

/// `∫_P q(x) e^{-⟨x, ξ_eff⟩}` for a convex PL function `q`.
pub fn polytope_exp_pl(p: &Polytope, xi_eff: &[f64], q: &PlFunction) -> Result<f64, ExpIntError> {
    check_dim(p.dim(), xi_eff)?;
    let cells = p.refine_for_pl(q)?;
    cells
        .iter()
        .try_fold(0.0, |acc, c| Ok(acc + simplex_exp_affine(&c.simplex, xi_eff, &piece_form(q, c.piece))?))
}

fn cell_kernel<'a>(c: &'a BoundaryCell, xi_eff: &[f64]) -> Result<CellKernel<'a>, ExpIntError> {
    CellKernel::new(c.points_f64(), c.mass_f64(), xi_eff)
}

/// `∫_{∂P} e^{-⟨x, ξ_eff⟩} dσ`.
pub fn boundary_exp(p: &Polytope, xi_eff: &[f64]) -> Result<f64, ExpIntError> {
    check_dim(p.dim(), xi_eff)?;
    if is_zero(xi_eff) {
        return Ok(crate::exact::to_f64(&p.boundary_volume()));
    }
    p.boundary_cells()
        .iter()
        .try_fold(0.0, |acc, c| Ok(acc + cell_kernel(c, xi_eff)?.linear_moment(&[])?))
}

/// `∫_{∂P} ℓ(x) e^{-⟨x, ξ_eff⟩} dσ`.
pub fn boundary_exp_affine(p: &Polytope, xi_eff: &[f64], l: &AffineForm) -> Result<f64, ExpIntError> {
    check_dim(p.dim(), xi_eff)?;
    p.boundary_cells()
        .iter()
        .try_fold(0.0, |acc, c| Ok(acc + cell_kernel(c, xi_eff)?.affine_moment(&[l])?))
}

/// `∫_{∂P} q(x) e^{-⟨x, ξ_eff⟩} dσ`.
pub fn boundary_exp_pl(p: &Polytope, xi_eff: &[f64], q: &PlFunction) -> Result<f64, ExpIntError> {
    check_dim(p.dim(), xi_eff)?;
    let cells = p.refine_boundary_for_pl(q)?;
    cells.iter().try_fold(0.0, |acc, c| {
        Ok(acc + cell_kernel(&c.cell, xi_eff)?.affine_moment(&[&piece_form(q, c.piece)])?)
    })
}

/// `∫_P ⟨x, ζ⟩^k dμ` from `∫_S ℓ^k = d! vol · h_k(ℓ(v_0), …, ℓ(v_d)) · k! / (d+k)!`.
pub fn polytope_power_moment(p: &Polytope, zeta: &[f64], k: usize) -> Result<f64, ExpIntError> {
    check_dim(p.dim(), zeta)?;
    let n = p.dim();
    // k! / (n+k)! = 1 / ((k+1)(k+2)…(k+n))
    let ratio: f64 = (1..=n).map(|j| 1.0 / (k + j) as f64).product();
    let fact_n: f64 = (1..=n).map(|j| j as f64).product();
    let mut total = 0.0;
    for s in p.simplices() {
        let vals: Vec<f64> = s.points_f64().iter().map(|v| dot(v, zeta)).collect();
        total += fact_n * s.volume_f64() * complete_homogeneous(&vals, k) * ratio;
    }
    Ok(total)
}

/// Complete homogeneous symmetric polynomial `h_k`.
pub(crate) fn complete_homogeneous(vals: &[f64], k: usize) -> f64 {
    let mut h = vec![0.0; k + 1];
    h[0] = 1.0;
    for &v in vals {
        for j in 1..=k {
            h[j] += v * h[j - 1];
        }
    }
    h[k]
}

/// Brion's vertex formula
/// `∫_P e^{-⟨x, η⟩} = Σ_v e^{-⟨v, η⟩} / Π_i ⟨e_{v,i}, η⟩` over the primitive
/// inward edge generators of a Delzant polytope. Covectors on (or near) the
/// pole arrangement are moved along a fixed irrational direction and the
/// result is Richardson-extrapolated to zero perturbation.
pub fn brion_exp(p: &Polytope, xi_eff: &[f64]) -> Result<f64, ExpIntError> {
    check_dim(p.dim(), xi_eff)?;
    let cones = p.vertex_cones()?;
    let verts = p.vertices_f64();
    let gens: Vec<Vec<Vec<f64>>> = cones
        .iter()
        .map(|c| {
            c.generators
                .iter()
                .map(|g| g.iter().map(|x| num::ToPrimitive::to_f64(x).unwrap()).collect())
                .collect()
        })
        .collect();
    let min_pole = |eta: &[f64]| -> f64 {
        gens.iter()
            .flatten()
            .map(|g| dot(g, eta).abs())
            .fold(f64::INFINITY, f64::min)
    };
    let sum = |eta: &[f64]| -> Result<f64, ExpIntError> {
        let mut total = 0.0;
        for (c, g) in cones.iter().zip(&gens) {
            let node = -dot(&verts[c.vertex], eta);
            check_nodes(&[node])?;
            let denom: f64 = g.iter().map(|e| dot(e, eta)).product();
            total += node.exp() / denom;
        }
        Ok(total)
    };

    let norm = xi_eff.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut eps = 1e-6 * (1.0 + norm);
    if min_pole(xi_eff) >= eps {
        return sum(xi_eff);
    }
    let n = p.dim();
    let mut w: Vec<f64> = (0..n).map(|i| std::f64::consts::PI.powi(i as i32)).collect();
    let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    w.iter_mut().for_each(|x| *x /= wn);
    let shifted = |e: f64| -> Vec<f64> { xi_eff.iter().zip(&w).map(|(x, wi)| x + e * wi).collect() };
    for _ in 0..5 {
        let (a, b) = (shifted(eps), shifted(eps / 2.0));
        if min_pole(&a) > 1e-3 * eps && min_pole(&b) > 1e-3 * eps {
            return Ok(2.0 * sum(&b)? - sum(&a)?);
        }
        eps *= 10.0;
    }
    Err(ExpIntError::DegenerateDirection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{rat, rat_frac, Rational};
    use crate::polytope::{AffinePiece, Halfspace, Pulling};
    use approx::assert_relative_eq;

    fn pt(xs: &[i64]) -> Vec<Rational> {
        xs.iter().map(|&x| rat(x)).collect()
    }

    fn interval() -> Polytope {
        Polytope::from_vertices(vec![pt(&[0]), pt(&[1])]).unwrap()
    }

    fn simplex2() -> Polytope {
        Polytope::from_vertices(vec![pt(&[0, 0]), pt(&[1, 0]), pt(&[0, 1])]).unwrap()
    }

    fn square() -> Polytope {
        Polytope::from_vertices(vec![pt(&[0, 0]), pt(&[1, 0]), pt(&[0, 1]), pt(&[1, 1])]).unwrap()
    }

    /// Composite Gauss-Legendre on [a, b]; independent of the node machinery.
    fn gauss(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let x = [
            -0.906_179_845_938_664,
            -0.538_469_310_105_683,
            0.0,
            0.538_469_310_105_683,
            0.906_179_845_938_664,
        ];
        let w = [
            0.236_926_885_056_189,
            0.478_628_670_499_366,
            0.568_888_888_888_889,
            0.478_628_670_499_366,
            0.236_926_885_056_189,
        ];
        let panels = 200;
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|k| {
                let lo = a + k as f64 * h;
                x.iter().zip(&w).map(|(xi, wi)| wi * f(lo + h * (xi + 1.0) / 2.0)).sum::<f64>() * h / 2.0
            })
            .sum()
    }

    #[test]
    fn divided_difference_two_nodes() {
        let r = dd_exp(&[0.0, 3.0]).unwrap();
        assert_eq!(r.method, Method::DividedDifference);
        assert_relative_eq!(r.value, (3f64.exp() - 1.0) / 3.0, max_relative = 1e-14);
        let r = dd_exp(&[0.2, 0.2, 0.2]).unwrap();
        assert_eq!(r.method, Method::TaylorCluster);
        assert_relative_eq!(r.value, 0.2f64.exp() / 2.0, max_relative = 1e-15);
    }

    #[test]
    fn paths_agree_across_switch() {
        for gap in [0.9, 0.99, 1.0, 1.01, 1.2, 1e-3, 1e-5] {
            let nodes = [-2.0, -2.0 + gap, 1.5];
            let hybrid = dd_exp(&nodes).unwrap().value;
            let mut sorted = nodes;
            sorted.sort_by(f64::total_cmp);
            let plain = dd_exp_plain(&nodes).unwrap();
            let tol = if gap < 1e-2 { 1e-8 } else { 1e-10 };
            assert_relative_eq!(hybrid, plain, max_relative = tol);
            let pair = [0.3, 0.3 + gap];
            assert_relative_eq!(dd_exp_taylor(&pair), ((0.3f64 + gap).exp() - 0.3f64.exp()) / gap, max_relative = 1e-10);
        }
    }

    #[test]
    fn overflow_is_reported() {
        assert!(matches!(dd_exp(&[0.0, 800.0]), Err(ExpIntError::Overflow { .. })));
        let s = &interval().simplices()[0].clone();
        assert!(matches!(simplex_exp(s, &[-1000.0]), Err(ExpIntError::Overflow { .. })));
    }

    #[test]
    fn interval_closed_forms() {
        let p = interval();
        let s = &p.simplices()[0];
        assert_eq!(simplex_exp(s, &[0.0]).unwrap(), 1.0);
        assert_relative_eq!(simplex_exp(s, &[1.0]).unwrap(), 0.632_120_558_828_557_7, max_relative = 1e-13);
        let x = AffineForm::linear(vec![1.0]);
        assert_relative_eq!(simplex_exp_affine(s, &[0.0], &x).unwrap(), 0.5, max_relative = 1e-15);
        assert_relative_eq!(
            simplex_exp_affine(s, &[1.0], &x).unwrap(),
            1.0 - 2.0 * (-1f64).exp(),
            max_relative = 1e-13
        );
        for xi in [-7.0, -0.3, 1e-9, 0.25, 4.0, 30.0] {
            let exact = -(-xi as f64).exp_m1() / xi;
            assert_relative_eq!(polytope_exp(&p, &[xi]).unwrap(), exact, max_relative = 1e-12);
            assert_relative_eq!(boundary_exp(&p, &[xi]).unwrap(), 1.0 + (-xi as f64).exp(), max_relative = 1e-14);
        }
    }

    #[test]
    fn triangle_iterated_integral() {
        let p = simplex2();
        let exact = 1.0 - 2.0 * (-1f64).exp();
        assert_relative_eq!(polytope_exp(&p, &[1.0, 1.0]).unwrap(), 0.264_241_117_657_115_4, max_relative = 1e-12);
        assert_relative_eq!(polytope_exp(&p, &[1.0, 1.0]).unwrap(), exact, max_relative = 1e-13);
        // generic covector against nested quadrature
        let eta = [0.7, -1.9];
        let quad = gauss(|x| gauss(|y| (-(eta[0] * x + eta[1] * y)).exp(), 0.0, 1.0 - x), 0.0, 1.0);
        assert_relative_eq!(polytope_exp(&p, &eta).unwrap(), quad, max_relative = 1e-10);
        let l = AffineForm::new(vec![2.0, -1.0], 0.5);
        let quad = gauss(
            |x| gauss(|y| (2.0 * x - y + 0.5) * (-(eta[0] * x + eta[1] * y)).exp(), 0.0, 1.0 - x),
            0.0,
            1.0,
        );
        assert_relative_eq!(polytope_exp_affine(&p, &eta, &l).unwrap(), quad, max_relative = 1e-10);
    }

    #[test]
    fn zero_covector_paths() {
        assert_eq!(polytope_exp(&square(), &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(boundary_exp(&interval(), &[0.0]).unwrap(), 2.0);
        assert_eq!(boundary_exp(&simplex2(), &[0.0, 0.0]).unwrap(), 3.0);
        // the node path agrees with the exact zero path
        let tiny = [1e-300, 0.0];
        assert_relative_eq!(boundary_exp(&simplex2(), &tiny).unwrap(), 3.0, max_relative = 1e-15);
    }

    #[test]
    fn pl_integral_of_step() {
        let q = PlFunction::new(vec![
            AffinePiece::new(vec![rat(0)], rat(0)),
            AffinePiece::new(vec![rat(1)], rat_frac(-1, 2)),
        ])
        .unwrap();
        assert_relative_eq!(polytope_exp_pl(&interval(), &[0.0], &q).unwrap(), 0.125, max_relative = 1e-15);
        assert_relative_eq!(boundary_exp_pl(&interval(), &[0.0], &q).unwrap(), 0.5, max_relative = 1e-15);
        let xi = 1.3f64;
        let quad = gauss(|x| (x - 0.5).max(0.0) * (-xi * x).exp(), 0.0, 1.0);
        let quad_split = gauss(|x| (x - 0.5) * (-xi * x).exp(), 0.5, 1.0);
        assert_relative_eq!(quad, quad_split, max_relative = 1e-6);
        assert_relative_eq!(polytope_exp_pl(&interval(), &[xi], &q).unwrap(), quad_split, max_relative = 1e-12);
    }

    #[test]
    fn brion_interval_and_square() {
        let p = interval();
        for xi in [1.0, -2.5, 0.01] {
            assert_relative_eq!(brion_exp(&p, &[xi]).unwrap(), polytope_exp(&p, &[xi]).unwrap(), max_relative = 1e-12);
        }
        assert_relative_eq!(brion_exp(&p, &[0.0]).unwrap(), 1.0, max_relative = 1e-9);
        let sq = square();
        let eta = [0.37, -1.21];
        assert_relative_eq!(brion_exp(&sq, &eta).unwrap(), polytope_exp(&sq, &eta).unwrap(), max_relative = 1e-9);
        let weighted = Polytope::from_vertices(vec![pt(&[0, 0]), pt(&[2, 0]), pt(&[0, 1])]).unwrap();
        assert!(matches!(brion_exp(&weighted, &[1.0, 0.3]), Err(ExpIntError::Polytope(PolytopeError::NotDelzant(_)))));
    }

    #[test]
    fn triangulations_agree() {
        let p = Polytope::from_halfspaces(vec![
            Halfspace::from_ints(&[1, 0], rat(1)),
            Halfspace::from_ints(&[0, 1], rat(1)),
            Halfspace::from_ints(&[-1, -1], rat(1)),
            Halfspace::from_ints(&[1, 1], rat(1)),
        ])
        .unwrap();
        let eta = [0.8, -0.35];
        let a = simplices_exp(&p.triangulate_with(Pulling::First), &eta).unwrap();
        let b = simplices_exp(&p.triangulate_with(Pulling::Last), &eta).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn power_moments_match_exponential_series() {
        let p = simplex2();
        // ∫ x dμ over the standard triangle is 1/6, ∫ x^2 is 1/12
        assert_relative_eq!(polytope_power_moment(&p, &[1.0, 0.0], 1).unwrap(), 1.0 / 6.0, max_relative = 1e-15);
        assert_relative_eq!(polytope_power_moment(&p, &[1.0, 0.0], 2).unwrap(), 1.0 / 12.0, max_relative = 1e-15);
        assert_relative_eq!(polytope_power_moment(&p, &[1.0, 1.0], 0).unwrap(), 0.5, max_relative = 1e-15);
    }
}
