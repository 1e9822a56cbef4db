//! Exact rational convex polytopes.
//!
//! A [`Polytope`] keeps both representations: an irredundant list of facets
//! `⟨x, u_F⟩ >= -c_F` with primitive integer normals `u_F`, and the sorted
//! list of rational vertices. Facets are ordered lexicographically by normal
//! and vertices lexicographically, so two polytopes built from the same data
//! compare equal field by field.
//!
//! The boundary measure used throughout the crate is the lattice-normalized
//! measure `dσ` with `dμ = dσ ∧ d⟨·, u_F⟩` on each facet. In the coordinate
//! chart obtained by dropping axis `k` of the facet hyperplane this is
//! `dσ = dy / |u_{F,k}|`, which keeps facet masses rational.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use num::{BigInt, One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::exact::{self, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolytopeError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("polytope is unbounded (nontrivial recession cone)")]
    Unbounded,
    #[error("halfspaces are infeasible")]
    Empty,
    #[error("affine hull has dimension {affine_dim} < {dim}")]
    NotFullDim { affine_dim: usize, dim: usize },
    #[error("polytope is not Delzant: {0}")]
    NotDelzant(String),
}

/// Closed halfspace `⟨x, normal⟩ >= -offset`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Halfspace {
    pub normal: Vec<BigInt>,
    pub offset: Rational,
}

impl Halfspace {
    pub fn new(normal: Vec<BigInt>, offset: Rational) -> Self {
        Self { normal, offset }
    }

    pub fn from_ints(normal: &[i64], offset: Rational) -> Self {
        Self::new(normal.iter().map(|&v| BigInt::from(v)).collect(), offset)
    }

    /// `⟨x, u⟩ + c`; nonnegative exactly on the halfspace.
    pub fn slack(&self, x: &[Rational]) -> Rational {
        exact::dot_int(x, &self.normal) + &self.offset
    }

    /// Rescales so the normal is primitive. The halfspace itself is unchanged.
    fn primitive(&self) -> Self {
        let g = exact::gcd_of(&self.normal);
        if g.is_one() || g.is_zero() {
            return self.clone();
        }
        Self {
            normal: self.normal.iter().map(|v| v / &g).collect(),
            offset: &self.offset / Rational::from_integer(g),
        }
    }

    /// Halfspace `⟨x, w⟩ + c >= 0` for a rational `w`, rescaled to a primitive
    /// integer normal. `None` when `w = 0`.
    pub fn from_rational(w: &[Rational], c: &Rational) -> Option<Self> {
        if w.iter().all(|x| x.is_zero()) {
            return None;
        }
        let normal = exact::primitive_integer(w);
        // normal = s * w for a positive rational s; recover s from any
        // nonzero coordinate.
        let (i, wi) = w.iter().enumerate().find(|(_, x)| !x.is_zero()).unwrap();
        let s = Rational::from_integer(normal[i].clone()) / wi;
        Some(Self { normal, offset: c * s })
    }

    fn normal_rational(&self) -> Vec<Rational> {
        self.normal.iter().map(|v| Rational::from_integer(v.clone())).collect()
    }
}

/// Facet of a polytope with its incident vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub normal: Vec<BigInt>,
    pub offset: Rational,
    pub vertex_indices: Vec<usize>,
    /// `1 / ‖u_F‖₂`: converts Euclidean facet measure into `dσ`.
    pub lattice_density: f64,
}

impl Facet {
    pub fn halfspace(&self) -> Halfspace {
        Halfspace::new(self.normal.clone(), self.offset.clone())
    }
}

/// Full-dimensional simplex with exact volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex {
    pub vertices: Vec<Vec<Rational>>,
    pub orientation: i8,
    volume: Rational,
    points: Vec<Vec<f64>>,
}

impl Simplex {
    pub fn new(vertices: Vec<Vec<Rational>>) -> Result<Self, PolytopeError> {
        let n = vertices.len().saturating_sub(1);
        if n == 0 || vertices.iter().any(|v| v.len() != n) {
            return Err(PolytopeError::InvalidInput(
                "simplex needs n+1 vertices in R^n".into(),
            ));
        }
        let rows: Vec<Vec<Rational>> = vertices[1..].iter().map(|v| exact::sub(v, &vertices[0])).collect();
        let d = exact::det(&rows);
        if d.is_zero() {
            return Err(PolytopeError::NotFullDim { affine_dim: exact::rank(&rows), dim: n });
        }
        let orientation = if d.is_positive() { 1 } else { -1 };
        let volume = d.abs() / Rational::from_integer(exact::factorial(n));
        let points = to_f64_points(&vertices);
        Ok(Self { vertices, orientation, volume, points })
    }

    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn volume(&self) -> &Rational {
        &self.volume
    }

    pub fn volume_f64(&self) -> f64 {
        exact::to_f64(&self.volume)
    }

    pub fn points_f64(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn barycenter(&self) -> Vec<Rational> {
        let n = self.dim();
        let k = exact::rat(n as i64 + 1);
        (0..n)
            .map(|j| self.vertices.iter().map(|v| v[j].clone()).sum::<Rational>() / &k)
            .collect()
    }
}

/// A `(n-1)`-simplex lying in a facet of an `n`-polytope, weighted by its
/// `dσ`-mass. For `n = 1` it is a single vertex of mass `1/|u_F|`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCell {
    pub vertices: Vec<Vec<Rational>>,
    pub facet: usize,
    mass: Rational,
    points: Vec<Vec<f64>>,
}

impl BoundaryCell {
    pub fn mass(&self) -> &Rational {
        &self.mass
    }

    pub fn mass_f64(&self) -> f64 {
        exact::to_f64(&self.mass)
    }

    pub fn points_f64(&self) -> &[Vec<f64>] {
        &self.points
    }
}

/// Affine function `x ↦ ⟨gradient, x⟩ + constant`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AffinePiece {
    pub gradient: Vec<Rational>,
    pub constant: Rational,
}

impl AffinePiece {
    pub fn new(gradient: Vec<Rational>, constant: Rational) -> Self {
        Self { gradient, constant }
    }

    pub fn eval(&self, x: &[Rational]) -> Rational {
        exact::dot(&self.gradient, x) + &self.constant
    }

    pub fn gradient_f64(&self) -> Vec<f64> {
        self.gradient.iter().map(exact::to_f64).collect()
    }

    pub fn constant_f64(&self) -> f64 {
        exact::to_f64(&self.constant)
    }
}

/// Convex piecewise-linear function `q(x) = max_i (⟨a_i, x⟩ + b_i)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlFunction {
    pub pieces: Vec<AffinePiece>,
}

impl PlFunction {
    pub fn new(pieces: Vec<AffinePiece>) -> Result<Self, PolytopeError> {
        let Some(first) = pieces.first() else {
            return Err(PolytopeError::InvalidInput("PL function needs at least one piece".into()));
        };
        let n = first.gradient.len();
        if pieces.iter().any(|p| p.gradient.len() != n) {
            return Err(PolytopeError::InvalidInput("PL pieces have mismatched dimensions".into()));
        }
        Ok(Self { pieces })
    }

    pub fn affine(gradient: Vec<Rational>, constant: Rational) -> Self {
        Self { pieces: vec![AffinePiece::new(gradient, constant)] }
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].gradient.len()
    }

    pub fn eval(&self, x: &[Rational]) -> Rational {
        self.pieces.iter().map(|p| p.eval(x)).max().unwrap()
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.gradient_f64().iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + p.constant_f64())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `q + c`.
    pub fn shifted(&self, c: &Rational) -> Self {
        Self {
            pieces: self
                .pieces
                .iter()
                .map(|p| AffinePiece::new(p.gradient.clone(), &p.constant + c))
                .collect(),
        }
    }

    pub fn is_affine(&self) -> bool {
        let mut distinct: Vec<&AffinePiece> = self.pieces.iter().collect();
        distinct.sort();
        distinct.dedup();
        distinct.len() == 1
    }
}

/// One cell of a PL refinement: `piece` attains the max of `q` on `simplex`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlCell {
    pub simplex: Simplex,
    pub piece: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlBoundaryCell {
    pub cell: BoundaryCell,
    pub piece: usize,
}

/// A facet presented as a full-dimensional polytope in the chart that drops
/// coordinate `dropped_axis`. `chart` is `None` for the point facets of a
/// one-dimensional polytope.
#[derive(Debug, Clone)]
pub struct FacetChart {
    pub facet: Facet,
    pub chart: Option<Polytope>,
    pub dropped_axis: usize,
    /// Converts chart Lebesgue measure into `dσ`: `1 / |u_{F,k}|`.
    pub density: Rational,
}

impl FacetChart {
    /// Maps chart coordinates back onto the facet hyperplane.
    pub fn lift(&self, y: &[Rational]) -> Vec<Rational> {
        let k = self.dropped_axis;
        let u = &self.facet.normal;
        let uk = Rational::from_integer(u[k].clone());
        let mut x = Vec::with_capacity(u.len());
        let mut rest = -self.facet.offset.clone();
        let mut yi = y.iter();
        for (j, uj) in u.iter().enumerate() {
            if j == k {
                x.push(Rational::zero());
            } else {
                let v = yi.next().unwrap().clone();
                rest -= &v * Rational::from_integer(uj.clone());
                x.push(v);
            }
        }
        x[k] = rest / uk;
        x
    }

    /// Pulls an affine function on the ambient space back to the chart.
    pub fn pull_back(&self, piece: &AffinePiece) -> AffinePiece {
        let k = self.dropped_axis;
        let u = &self.facet.normal;
        let uk = Rational::from_integer(u[k].clone());
        let ak = &piece.gradient[k];
        let gradient = (0..u.len())
            .filter(|&j| j != k)
            .map(|j| &piece.gradient[j] - ak * Rational::from_integer(u[j].clone()) / &uk)
            .collect();
        let constant = &piece.constant - ak * &self.facet.offset / &uk;
        AffinePiece::new(gradient, constant)
    }

    /// `dσ`-mass of the facet.
    pub fn mass(&self) -> Rational {
        match &self.chart {
            Some(c) => c.volume() * &self.density,
            None => self.density.clone(),
        }
    }
}

/// Edge generators at a simple vertex: primitive, pointing into the polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexCone {
    pub vertex: usize,
    pub generators: Vec<Vec<BigInt>>,
    pub determinant: BigInt,
}

/// Vertex choice used when coning off faces during triangulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pulling {
    /// Apex is the lexicographically smallest vertex of each face.
    #[default]
    First,
    /// Apex is the lexicographically largest vertex of each face.
    Last,
}

#[derive(Debug, Default)]
struct Cache {
    simplices: OnceLock<Vec<Simplex>>,
    charts: OnceLock<Vec<FacetChart>>,
    boundary: OnceLock<Vec<BoundaryCell>>,
}

impl Clone for Cache {
    fn clone(&self) -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone)]
pub struct Polytope {
    dim: usize,
    facets: Vec<Facet>,
    vertices: Vec<Vec<Rational>>,
    vertex_facets: Vec<Vec<usize>>,
    cache: Cache,
}

impl PartialEq for Polytope {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.facets == other.facets && self.vertices == other.vertices
    }
}

fn to_f64_points(v: &[Vec<Rational>]) -> Vec<Vec<f64>> {
    v.iter().map(|p| p.iter().map(exact::to_f64).collect()).collect()
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// All vertices of `{x : every halfspace holds}`, by intersecting every
/// `dim`-subset of boundary hyperplanes and keeping feasible unique points.
fn enumerate_vertices(dim: usize, hs: &[Halfspace]) -> BTreeSet<Vec<Rational>> {
    let normals: Vec<Vec<Rational>> = hs.iter().map(|h| h.normal_rational()).collect();
    let mut found = BTreeSet::new();
    for combo in combinations(hs.len(), dim) {
        let a: Vec<Vec<Rational>> = combo.iter().map(|&i| normals[i].clone()).collect();
        let b: Vec<Rational> = combo.iter().map(|&i| -hs[i].offset.clone()).collect();
        let Some(x) = exact::solve(&a, &b) else { continue };
        if found.contains(&x) {
            continue;
        }
        if hs.iter().all(|h| !h.slack(&x).is_negative()) {
            found.insert(x);
        }
    }
    found
}

/// True when `{d : ⟨d, u⟩ >= 0 for all normals}` is `{0}`.
fn recession_cone_trivial(dim: usize, hs: &[Halfspace]) -> bool {
    let mut cone: Vec<Halfspace> = hs
        .iter()
        .map(|h| Halfspace::new(h.normal.clone(), Rational::zero()))
        .collect();
    for i in 0..dim {
        let mut e = vec![BigInt::zero(); dim];
        e[i] = BigInt::one();
        cone.push(Halfspace::new(e.clone(), Rational::one()));
        e[i] = -BigInt::one();
        cone.push(Halfspace::new(e, Rational::one()));
    }
    enumerate_vertices(dim, &cone)
        .iter()
        .all(|v| v.iter().all(|x| x.is_zero()))
}

impl Polytope {
    /// Builds a polytope from halfspaces `⟨x, u⟩ >= -c`.
    pub fn from_halfspaces(halfspaces: Vec<Halfspace>) -> Result<Self, PolytopeError> {
        let Some(first) = halfspaces.first() else {
            return Err(PolytopeError::InvalidInput("no halfspaces given".into()));
        };
        let dim = first.normal.len();
        if dim == 0 {
            return Err(PolytopeError::InvalidInput("dimension must be positive".into()));
        }
        if let Some(bad) = halfspaces.iter().position(|h| h.normal.len() != dim) {
            return Err(PolytopeError::InvalidInput(format!(
                "halfspace {bad} has {} entries, expected {dim}",
                halfspaces[bad].normal.len()
            )));
        }
        if let Some(bad) = halfspaces.iter().position(|h| h.normal.iter().all(|x| x.is_zero())) {
            return Err(PolytopeError::InvalidInput(format!("halfspace {bad} has a zero normal")));
        }
        let mut hs: Vec<Halfspace> = halfspaces.iter().map(Halfspace::primitive).collect();
        hs.sort();
        hs.dedup();

        if !recession_cone_trivial(dim, &hs) {
            return Err(PolytopeError::Unbounded);
        }
        let vertices: Vec<Vec<Rational>> = enumerate_vertices(dim, &hs).into_iter().collect();
        if vertices.is_empty() {
            return Err(PolytopeError::Empty);
        }
        let refs: Vec<&[Rational]> = vertices.iter().map(|v| v.as_slice()).collect();
        let affine_dim = exact::affine_rank(&refs);
        if affine_dim < dim {
            return Err(PolytopeError::NotFullDim { affine_dim, dim });
        }

        let mut facets = Vec::new();
        for h in hs {
            let on: Vec<usize> = (0..vertices.len())
                .filter(|&i| h.slack(&vertices[i]).is_zero())
                .collect();
            let pts: Vec<&[Rational]> = on.iter().map(|&i| vertices[i].as_slice()).collect();
            if on.len() >= dim && exact::affine_rank(&pts) == dim - 1 {
                let norm2: f64 = h.normal.iter().map(|v| v.to_f64().unwrap().powi(2)).sum();
                facets.push(Facet {
                    normal: h.normal,
                    offset: h.offset,
                    vertex_indices: on,
                    lattice_density: 1.0 / norm2.sqrt(),
                });
            }
        }
        // Two facets cannot share a normal once the polytope is full
        // dimensional, and sorting the primitive halfspaces above already
        // ordered them lexicographically by normal.
        let mut vertex_facets = vec![Vec::new(); vertices.len()];
        for (fi, f) in facets.iter().enumerate() {
            for &v in &f.vertex_indices {
                vertex_facets[v].push(fi);
            }
        }
        Ok(Self { dim, facets, vertices, vertex_facets, cache: Cache::default() })
    }

    /// Convex hull of rational points.
    pub fn from_vertices(points: Vec<Vec<Rational>>) -> Result<Self, PolytopeError> {
        let Some(first) = points.first() else {
            return Err(PolytopeError::InvalidInput("no points given".into()));
        };
        let dim = first.len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(PolytopeError::InvalidInput("points must share a positive dimension".into()));
        }
        let pts: Vec<Vec<Rational>> = points.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let refs: Vec<&[Rational]> = pts.iter().map(|v| v.as_slice()).collect();
        let affine_dim = exact::affine_rank(&refs);
        if affine_dim < dim {
            return Err(PolytopeError::NotFullDim { affine_dim, dim });
        }
        let mut hs = BTreeSet::new();
        for combo in combinations(pts.len(), dim) {
            let base = &pts[combo[0]];
            let rows: Vec<Vec<Rational>> = combo[1..].iter().map(|&i| exact::sub(&pts[i], base)).collect();
            let ns = exact::nullspace(&rows, dim);
            if ns.len() != 1 {
                continue;
            }
            let u = exact::primitive_integer(&ns[0]);
            let sides: Vec<Rational> = pts
                .iter()
                .map(|p| exact::dot_int(&exact::sub(p, base), &u))
                .collect();
            let sign = if sides.iter().all(|s| !s.is_negative()) {
                1
            } else if sides.iter().all(|s| !s.is_positive()) {
                -1
            } else {
                continue;
            };
            let u: Vec<BigInt> = u.into_iter().map(|v| v * sign).collect();
            let c = -exact::dot_int(base, &u);
            hs.insert(Halfspace::new(u, c));
        }
        Self::from_halfspaces(hs.into_iter().collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn vertices(&self) -> &[Vec<Rational>] {
        &self.vertices
    }

    pub fn vertices_f64(&self) -> Vec<Vec<f64>> {
        to_f64_points(&self.vertices)
    }

    /// Facets through each vertex.
    pub fn vertex_facets(&self) -> &[Vec<usize>] {
        &self.vertex_facets
    }

    pub fn halfspaces(&self) -> Vec<Halfspace> {
        self.facets.iter().map(Facet::halfspace).collect()
    }

    pub fn contains(&self, x: &[Rational]) -> bool {
        self.facets.iter().all(|f| !f.halfspace().slack(x).is_negative())
    }

    /// Reflexive in the sense used for Fano polytopes: every facet offset is 1.
    pub fn is_reflexive(&self) -> bool {
        self.facets.iter().all(|f| f.offset.is_one())
    }

    /// `τ P` for `τ > 0`.
    pub fn dilate(&self, tau: &Rational) -> Result<Self, PolytopeError> {
        if !tau.is_positive() {
            return Err(PolytopeError::InvalidInput("dilation factor must be positive".into()));
        }
        Self::from_halfspaces(
            self.facets
                .iter()
                .map(|f| Halfspace::new(f.normal.clone(), &f.offset * tau))
                .collect(),
        )
    }

    /// Cached triangulation (pulling the lexicographically first vertex).
    pub fn simplices(&self) -> &[Simplex] {
        self.cache.simplices.get_or_init(|| self.triangulate_with(Pulling::First))
    }

    pub fn triangulate(&self) -> Vec<Simplex> {
        self.simplices().to_vec()
    }

    /// Pulling triangulation: cone the chosen apex over the triangulated
    /// facets that avoid it, recursively.
    pub fn triangulate_with(&self, pulling: Pulling) -> Vec<Simplex> {
        let all: Vec<usize> = (0..self.vertices.len()).collect();
        self.triangulate_face(&all, self.dim, pulling)
            .into_iter()
            .map(|idx| {
                Simplex::new(idx.iter().map(|&i| self.vertices[i].clone()).collect())
                    .expect("pulling triangulation yields full-dimensional simplices")
            })
            .collect()
    }

    fn triangulate_face(&self, face: &[usize], d: usize, pulling: Pulling) -> Vec<Vec<usize>> {
        if d == 0 || face.len() == d + 1 {
            return vec![face.to_vec()];
        }
        let apex = match pulling {
            Pulling::First => face[0],
            Pulling::Last => *face.last().unwrap(),
        };
        let mut sub_faces = BTreeSet::new();
        for f in &self.facets {
            let s: Vec<usize> = face.iter().copied().filter(|i| f.vertex_indices.contains(i)).collect();
            if s.len() < d || s.contains(&apex) {
                continue;
            }
            let pts: Vec<&[Rational]> = s.iter().map(|&i| self.vertices[i].as_slice()).collect();
            if exact::affine_rank(&pts) == d - 1 {
                sub_faces.insert(s);
            }
        }
        let mut out = Vec::new();
        for s in sub_faces {
            for t in self.triangulate_face(&s, d - 1, pulling) {
                let mut simplex = Vec::with_capacity(d + 1);
                simplex.push(apex);
                simplex.extend(t);
                out.push(simplex);
            }
        }
        out
    }

    pub fn volume(&self) -> Rational {
        self.simplices().iter().map(|s| s.volume().clone()).sum()
    }

    pub fn volume_f64(&self) -> f64 {
        exact::to_f64(&self.volume())
    }

    /// Exact centroid of the Lebesgue measure.
    pub fn barycenter(&self) -> Vec<Rational> {
        let vol = self.volume();
        let mut acc = vec![Rational::zero(); self.dim];
        for s in self.simplices() {
            for (a, b) in acc.iter_mut().zip(s.barycenter()) {
                *a += b * s.volume();
            }
        }
        acc.into_iter().map(|a| a / &vol).collect()
    }

    /// Splits `P` into simplices on which a single piece of `q` attains the
    /// max. Pieces active only on a measure-zero set contribute no cells.
    pub fn refine_for_pl(&self, q: &PlFunction) -> Result<Vec<PlCell>, PolytopeError> {
        if q.dim() != self.dim {
            return Err(PolytopeError::InvalidInput(format!(
                "PL function has dimension {}, polytope {}",
                q.dim(),
                self.dim
            )));
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (i, pi) in q.pieces.iter().enumerate() {
            if !seen.insert(pi) {
                continue;
            }
            if q.pieces.len() == 1 || q.pieces.iter().all(|p| p == pi) {
                out.extend(self.simplices().iter().map(|s| PlCell { simplex: s.clone(), piece: i }));
                continue;
            }
            let Some(region) = self.piece_region(q, i) else { continue };
            out.extend(region.simplices().iter().map(|s| PlCell { simplex: s.clone(), piece: i }));
        }
        Ok(out)
    }

    /// `P ∩ {piece i >= every other piece}` when full dimensional.
    fn piece_region(&self, q: &PlFunction, i: usize) -> Option<Polytope> {
        let pi = &q.pieces[i];
        let mut hs = self.halfspaces();
        for (j, pj) in q.pieces.iter().enumerate() {
            if j == i || pj == pi {
                continue;
            }
            let w: Vec<Rational> = exact::sub(&pi.gradient, &pj.gradient);
            let c = &pi.constant - &pj.constant;
            match Halfspace::from_rational(&w, &c) {
                Some(h) => hs.push(h),
                None if c.is_negative() => return None,
                None => {}
            }
        }
        match Self::from_halfspaces(hs) {
            Ok(p) => Some(p),
            Err(PolytopeError::Empty) | Err(PolytopeError::NotFullDim { .. }) => None,
            Err(e) => panic!("refinement of a bounded polytope failed: {e}"),
        }
    }

    /// Each facet as a polytope in the chart dropping its largest normal
    /// coordinate, with the density converting chart measure into `dσ`.
    pub fn facet_polytopes(&self) -> &[FacetChart] {
        self.cache.charts.get_or_init(|| {
            self.facets
                .iter()
                .map(|f| {
                    let k = (0..self.dim)
                        .max_by(|&a, &b| f.normal[a].abs().cmp(&f.normal[b].abs()).then(b.cmp(&a)))
                        .unwrap();
                    let density = Rational::new(BigInt::one(), f.normal[k].abs());
                    let chart = (self.dim > 1).then(|| {
                        let pts: Vec<Vec<Rational>> = f
                            .vertex_indices
                            .iter()
                            .map(|&i| {
                                self.vertices[i]
                                    .iter()
                                    .enumerate()
                                    .filter(|&(j, _)| j != k)
                                    .map(|(_, x)| x.clone())
                                    .collect()
                            })
                            .collect();
                        Polytope::from_vertices(pts).expect("facet projects onto a full-dimensional chart")
                    });
                    FacetChart { facet: f.clone(), chart, dropped_axis: k, density }
                })
                .collect()
        })
    }

    /// Cached decomposition of `∂P` into `dσ`-weighted cells.
    pub fn boundary_cells(&self) -> &[BoundaryCell] {
        self.cache.boundary.get_or_init(|| {
            let mut out = Vec::new();
            for (fi, fc) in self.facet_polytopes().iter().enumerate() {
                match &fc.chart {
                    None => {
                        let v = self.vertices[fc.facet.vertex_indices[0]].clone();
                        out.push(boundary_cell(vec![v], fi, fc.density.clone()));
                    }
                    Some(chart) => {
                        for s in chart.simplices() {
                            let verts = s.vertices.iter().map(|y| fc.lift(y)).collect();
                            out.push(boundary_cell(verts, fi, s.volume() * &fc.density));
                        }
                    }
                }
            }
            out
        })
    }

    /// Boundary cells refined by the linearity domains of `q` restricted to
    /// each facet.
    pub fn refine_boundary_for_pl(&self, q: &PlFunction) -> Result<Vec<PlBoundaryCell>, PolytopeError> {
        if q.dim() != self.dim {
            return Err(PolytopeError::InvalidInput("PL function dimension mismatch".into()));
        }
        let mut out = Vec::new();
        for (fi, fc) in self.facet_polytopes().iter().enumerate() {
            match &fc.chart {
                None => {
                    let v = &self.vertices[fc.facet.vertex_indices[0]];
                    let piece = argmax_piece(q, v);
                    out.push(PlBoundaryCell {
                        cell: boundary_cell(vec![v.clone()], fi, fc.density.clone()),
                        piece,
                    });
                }
                Some(chart) => {
                    let pulled = PlFunction { pieces: q.pieces.iter().map(|p| fc.pull_back(p)).collect() };
                    for c in chart.refine_for_pl(&pulled)? {
                        let verts = c.simplex.vertices.iter().map(|y| fc.lift(y)).collect();
                        out.push(PlBoundaryCell {
                            cell: boundary_cell(verts, fi, c.simplex.volume() * &fc.density),
                            piece: c.piece,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Total `dσ`-mass of `∂P`.
    pub fn boundary_volume(&self) -> Rational {
        self.facet_polytopes().iter().map(FacetChart::mass).sum()
    }

    /// Primitive inward edge generators at every vertex; fails unless every
    /// vertex is simple with a unimodular cone.
    pub fn vertex_cones(&self) -> Result<Vec<VertexCone>, PolytopeError> {
        let n = self.dim;
        let mut out = Vec::with_capacity(self.vertices.len());
        for (vi, fs) in self.vertex_facets.iter().enumerate() {
            if fs.len() != n {
                return Err(PolytopeError::NotDelzant(format!(
                    "vertex {vi} lies on {} facets (not simple)",
                    fs.len()
                )));
            }
            let normals: Vec<Vec<Rational>> = fs.iter().map(|&f| self.facets[f].halfspace().normal_rational()).collect();
            let mut generators = Vec::with_capacity(n);
            for i in 0..n {
                let rows: Vec<Vec<Rational>> = (0..n).filter(|&j| j != i).map(|j| normals[j].clone()).collect();
                let ns = exact::nullspace(&rows, n);
                let mut d = exact::primitive_integer(&ns[0]);
                let d_rat: Vec<Rational> = d.iter().map(|x| Rational::from_integer(x.clone())).collect();
                if exact::dot(&d_rat, &normals[i]).is_negative() {
                    d = d.into_iter().map(|x| -x).collect();
                }
                generators.push(d);
            }
            let m: Vec<Vec<Rational>> = generators
                .iter()
                .map(|g| g.iter().map(|x| Rational::from_integer(x.clone())).collect())
                .collect();
            let determinant = exact::det(&m).to_integer();
            if !determinant.abs().is_one() {
                return Err(PolytopeError::NotDelzant(format!(
                    "edge generators at vertex {vi} have determinant {determinant}"
                )));
            }
            out.push(VertexCone { vertex: vi, generators, determinant });
        }
        Ok(out)
    }

    pub fn check_delzant(&self) -> bool {
        self.vertex_cones().is_ok()
    }
}

fn boundary_cell(vertices: Vec<Vec<Rational>>, facet: usize, mass: Rational) -> BoundaryCell {
    let points = to_f64_points(&vertices);
    BoundaryCell { vertices, facet, mass, points }
}

fn argmax_piece(q: &PlFunction, x: &[Rational]) -> usize {
    let mut best = 0;
    let mut best_val = q.pieces[0].eval(x);
    for (i, p) in q.pieces.iter().enumerate().skip(1) {
        let v = p.eval(x);
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}
