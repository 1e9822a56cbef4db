//! JSON schemas for polytopes, PL functions and scan samplers.
//! Rationals travel as `"p/q"` strings; plain JSON numbers are accepted on
//! input (decimals are read exactly).

use num::BigInt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{format_rational, parse_rational, Rational};
use crate::polytope::{AffinePiece, Halfspace, PlFunction, Polytope};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RationalJson {
    Text(String),
    Int(i64),
    Float(f64),
}

impl RationalJson {
    pub fn parse(&self, field: &str) -> Result<Rational> {
        let parsed = match self {
            Self::Text(s) => parse_rational(s),
            Self::Int(i) => Some(crate::exact::rat(*i)),
            Self::Float(f) => parse_rational(&f.to_string()),
        };
        parsed.ok_or_else(|| Error::invalid(format!("{field}: not a rational number: {self:?}")))
    }
}

impl From<&Rational> for RationalJson {
    fn from(q: &Rational) -> Self {
        Self::Text(format_rational(q))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceJson {
    pub normal: Vec<i64>,
    pub offset: RationalJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeJson {
    pub dim: usize,
    pub halfspaces: Vec<HalfspaceJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<Vec<RationalJson>>>,
}

impl PolytopeJson {
    pub fn to_polytope(&self) -> Result<Polytope> {
        let mut hs = Vec::with_capacity(self.halfspaces.len());
        for (i, h) in self.halfspaces.iter().enumerate() {
            if h.normal.len() != self.dim {
                return Err(Error::invalid(format!(
                    "halfspaces[{i}].normal has {} entries, dim is {}",
                    h.normal.len(),
                    self.dim
                )));
            }
            let offset = h.offset.parse(&format!("halfspaces[{i}].offset"))?;
            hs.push(Halfspace::new(h.normal.iter().map(|&v| BigInt::from(v)).collect(), offset));
        }
        let p = Polytope::from_halfspaces(hs)?;
        if let Some(vs) = &self.vertices {
            let mut given = Vec::with_capacity(vs.len());
            for (i, v) in vs.iter().enumerate() {
                let pt = v
                    .iter()
                    .enumerate()
                    .map(|(j, x)| x.parse(&format!("vertices[{i}][{j}]")))
                    .collect::<Result<Vec<_>>>()?;
                given.push(pt);
            }
            given.sort();
            given.dedup();
            if given != p.vertices() {
                return Err(Error::invalid("vertices: do not match the halfspace description"));
            }
        }
        Ok(p)
    }

    pub fn from_polytope(p: &Polytope) -> Self {
        Self {
            dim: p.dim(),
            halfspaces: p
                .facets()
                .iter()
                .map(|f| HalfspaceJson {
                    normal: f.normal.iter().map(|v| i64::try_from(v).expect("normal fits in i64")).collect(),
                    offset: (&f.offset).into(),
                })
                .collect(),
            vertices: Some(p.vertices().iter().map(|v| v.iter().map(Into::into).collect()).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceJson {
    pub gradient: Vec<RationalJson>,
    pub constant: RationalJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlJson {
    pub pieces: Vec<PieceJson>,
}

impl PlJson {
    pub fn to_pl(&self) -> Result<PlFunction> {
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for (i, p) in self.pieces.iter().enumerate() {
            let gradient = p
                .gradient
                .iter()
                .enumerate()
                .map(|(j, x)| x.parse(&format!("pieces[{i}].gradient[{j}]")))
                .collect::<Result<Vec<_>>>()?;
            let constant = p.constant.parse(&format!("pieces[{i}].constant"))?;
            pieces.push(AffinePiece::new(gradient, constant));
        }
        Ok(PlFunction::new(pieces)?)
    }

    pub fn from_pl(q: &PlFunction) -> Self {
        Self {
            pieces: q
                .pieces
                .iter()
                .map(|p| PieceJson {
                    gradient: p.gradient.iter().map(Into::into).collect(),
                    constant: (&p.constant).into(),
                })
                .collect(),
        }
    }
}

/// Random convex PL functions for the semistability scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub count: usize,
    pub max_pieces: usize,
    pub coeff_bound: f64,
    pub seed: u64,
}

impl SamplerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.max_pieces == 0 {
            return Err(Error::invalid("max_pieces must be at least 1"));
        }
        if !(self.coeff_bound.is_finite() && self.coeff_bound >= 0.0) {
            return Err(Error::invalid("coeff_bound must be a nonnegative number"));
        }
        Ok(())
    }
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self { count: 100, max_pieces: 3, coeff_bound: 2.0, seed: 7 }
    }
}
