//! JSON file formats shared by the command-line tool.
//!
//! Numbers are written as `["num","den"]` string pairs in rational mode and as
//! plain JSON floats in float mode. On input a number may be a pair, a string
//! such as `"3/7"` or `"0.25"`, or a JSON number (read through its shortest
//! decimal form, so `0.1` is `1/10`).

use serde::{Deserialize, Serialize};

use crate::cone::{Facet, ThermalCone};
use crate::error::{Result, ThermoError};
use crate::gibbs::{make_gibbs_context, GibbsContext};
use crate::model::{ConvexDecomposition, DecompositionTerm, EdpStep, Population, StochasticMatrix, ThermoPermutation};
use crate::numeric::{parse_rational, rational_from_decimal_f64, rational_from_parts, rational_to_pair, Rational, Scalar};
use crate::synthesis::EdpSequence;

/// Denominator cap used when energies must be turned into multiplicities.
pub const DEFAULT_MAX_DEN: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Pair([String; 2]),
    Text(String),
    Float(f64),
}

impl Number {
    pub fn to_rational(&self) -> Result<Rational> {
        match self {
            Number::Pair([num, den]) => rational_from_parts(num, den),
            Number::Text(text) => parse_rational(text),
            Number::Float(v) => rational_from_decimal_f64(*v),
        }
    }

    pub fn to_f64(&self) -> Result<f64> {
        match self {
            Number::Float(v) => Ok(*v),
            other => Ok(other.to_rational()?.to_f64()),
        }
    }
}

/// Scalars that can be read from and written to [`Number`].
pub trait JsonScalar: Scalar {
    fn from_number(n: &Number) -> Result<Self>;
    fn to_number(&self) -> Number;
}

impl JsonScalar for f64 {
    fn from_number(n: &Number) -> Result<Self> {
        n.to_f64()
    }

    fn to_number(&self) -> Number {
        Number::Float(*self)
    }
}

impl JsonScalar for Rational {
    fn from_number(n: &Number) -> Result<Self> {
        n.to_rational()
    }

    fn to_number(&self) -> Number {
        Number::Pair(rational_to_pair(self))
    }
}

/// Writes `x` exactly, or as a float when `float` is set.
pub fn number<S: JsonScalar>(x: &S, float: bool) -> Number {
    if float {
        Number::Float(x.to_f64())
    } else {
        x.to_number()
    }
}

fn numbers<S: JsonScalar>(xs: &[S], float: bool) -> Vec<Number> {
    xs.iter().map(|x| number(x, float)).collect()
}

fn parse_numbers<S: JsonScalar>(xs: &[Number]) -> Result<Vec<S>> {
    xs.iter().map(S::from_number).collect()
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| ThermoError::Parse(format!("{what}: {e}")))
}

/// Either a bare array or `{"x": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PopulationFile {
    Wrapped { x: Vec<Number> },
    Bare(Vec<Number>),
}

impl PopulationFile {
    pub fn new<S: JsonScalar>(p: &Population<S>, float: bool) -> Self {
        PopulationFile::Wrapped {
            x: numbers(p.as_slice(), float),
        }
    }

    pub fn parse<S: JsonScalar>(&self) -> Result<Population<S>> {
        let (PopulationFile::Wrapped { x } | PopulationFile::Bare(x)) = self;
        Population::new(parse_numbers(x)?)
    }
}

pub fn read_population<S: JsonScalar>(text: &str) -> Result<Population<S>> {
    from_json::<PopulationFile>(text, "population")?.parse()
}

/// Any of `d`, `g` or `energies` defines the context, tried in that order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energies: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Number>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<u64>>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub total: Option<u64>,
    /// Denominator cap when converting energies (default 1000).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_den: Option<u64>,
}

impl ContextFile {
    pub fn new(ctx: &GibbsContext) -> Self {
        let rational = ctx.rational();
        ContextFile {
            energies: Some(ctx.energies().to_vec()),
            g: Some(match ctx.gibbs_rational() {
                Ok(g) => numbers(&g, false),
                Err(_) => numbers(ctx.weights(), true),
            }),
            d: rational.map(|r| r.d.clone()),
            total: rational.map(|r| r.total),
            max_den: None,
        }
    }

    /// `allow_float` accepts energies without a rational form (float mode).
    pub fn build(&self, allow_float: bool) -> Result<GibbsContext> {
        let ctx = if let Some(d) = &self.d {
            GibbsContext::from_degeneracies(d.clone())?
        } else if let Some(g) = &self.g {
            let g: Vec<Rational> = parse_numbers(g)?;
            GibbsContext::from_rational_weights(&g)?
        } else if let Some(energies) = &self.energies {
            match make_gibbs_context(energies, self.max_den.unwrap_or(DEFAULT_MAX_DEN)) {
                Ok(ctx) => ctx,
                Err(ThermoError::Overflow { .. }) if allow_float => GibbsContext::from_energies_float(energies)?,
                Err(e) => return Err(e),
            }
        } else {
            return Err(ThermoError::Parse("context needs one of \"d\", \"g\" or \"energies\"".into()));
        };
        if let (Some(stated), Ok(total)) = (self.total, ctx.total()) {
            if stated != total {
                return Err(ThermoError::Parse(format!("\"D\" is {stated} but the multiplicities sum to {total}")));
            }
        }
        Ok(ctx)
    }
}

pub fn read_context(text: &str, allow_float: bool) -> Result<GibbsContext> {
    from_json::<ContextFile>(text, "context")?.build(allow_float)
}

/// `{"n": .., "cols": [[..], ..]}` with `cols[j][i] = T_{i|j}`. Other fields
/// are ignored, so sequence files can be read as matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub n: usize,
    pub cols: Vec<Vec<Number>>,
}

impl MatrixFile {
    pub fn new<S: JsonScalar>(t: &StochasticMatrix<S>, float: bool) -> Self {
        MatrixFile {
            n: t.n(),
            cols: t.columns().iter().map(|c| numbers(c, float)).collect(),
        }
    }

    pub fn parse<S: JsonScalar>(&self) -> Result<StochasticMatrix<S>> {
        if self.cols.len() != self.n {
            return Err(ThermoError::DimensionMismatch {
                expected: self.n,
                found: self.cols.len(),
            });
        }
        let cols = self.cols.iter().map(|c| parse_numbers(c)).collect::<Result<_>>()?;
        StochasticMatrix::from_columns(cols)
    }
}

pub fn read_matrix<S: JsonScalar>(text: &str) -> Result<StochasticMatrix<S>> {
    from_json::<MatrixFile>(text, "matrix")?.parse()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFile {
    pub lo: usize,
    pub hi: usize,
    pub p_down: Number,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceFile {
    pub phase: String,
    pub positions: [usize; 2],
    pub from: usize,
    pub to: usize,
    pub delta: Number,
    pub lambda: Number,
    pub lo: usize,
    pub hi: usize,
    pub p_down: Number,
}

/// A synthesised sequence plus its composite matrix (`n`, `cols`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceFile {
    pub grouped: bool,
    pub ungrouped_len: usize,
    pub source_order: Vec<usize>,
    pub target_order: Vec<usize>,
    pub initial_relabeling: Vec<usize>,
    pub final_relabeling: Vec<usize>,
    pub steps: Vec<StepFile>,
    pub provenance: Vec<ProvenanceFile>,
    pub n: usize,
    pub cols: Vec<Vec<Number>>,
}

impl SequenceFile {
    pub fn new<S: JsonScalar>(seq: &EdpSequence<S>, ctx: &GibbsContext, float: bool) -> Result<Self> {
        let matrix = MatrixFile::new(&seq.to_matrix(ctx)?, float);
        Ok(SequenceFile {
            grouped: seq.grouped,
            ungrouped_len: seq.ungrouped_len(),
            source_order: seq.source_order.clone(),
            target_order: seq.target_order.clone(),
            initial_relabeling: seq.initial_relabeling.clone(),
            final_relabeling: seq.final_relabeling.clone(),
            steps: seq
                .steps
                .iter()
                .map(|s| StepFile {
                    lo: s.lo,
                    hi: s.hi,
                    p_down: number(&s.p_down, float),
                })
                .collect(),
            provenance: seq
                .provenance
                .iter()
                .map(|r| ProvenanceFile {
                    phase: r.phase.name().into(),
                    positions: [r.positions.0, r.positions.1],
                    from: r.from,
                    to: r.to,
                    delta: number(&r.delta, float),
                    lambda: number(&r.lambda, float),
                    lo: r.step.lo,
                    hi: r.step.hi,
                    p_down: number(&r.step.p_down, float),
                })
                .collect(),
            n: matrix.n,
            cols: matrix.cols,
        })
    }

    pub fn parse_steps<S: JsonScalar>(&self, ctx: &GibbsContext) -> Result<Vec<EdpStep<S>>> {
        self.steps
            .iter()
            .map(|s| EdpStep::new(s.lo, s.hi, S::from_number(&s.p_down)?, ctx))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermFile {
    pub weight: Number,
    pub lifted_perm: Vec<usize>,
    pub cols: Vec<Vec<Number>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionFile {
    pub n: usize,
    pub terms: Vec<TermFile>,
}

impl DecompositionFile {
    pub fn new<S: JsonScalar>(dec: &ConvexDecomposition<S>, float: bool) -> Self {
        DecompositionFile {
            n: dec.n(),
            terms: dec
                .terms
                .iter()
                .map(|t| TermFile {
                    weight: number(&t.weight, float),
                    lifted_perm: t.factor.lifted_perm.clone(),
                    cols: t.factor.pulled_back.columns().iter().map(|c| numbers(c, float)).collect(),
                })
                .collect(),
        }
    }

    pub fn parse<S: JsonScalar>(&self) -> Result<ConvexDecomposition<S>> {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let matrix = MatrixFile {
                    n: self.n,
                    cols: t.cols.clone(),
                };
                Ok(DecompositionTerm {
                    weight: S::from_number(&t.weight)?,
                    factor: ThermoPermutation {
                        lifted_perm: t.lifted_perm.clone(),
                        pulled_back: matrix.parse()?,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if terms.is_empty() {
            return Err(ThermoError::Parse("decomposition has no terms".into()));
        }
        Ok(ConvexDecomposition { terms })
    }
}

pub fn read_decomposition<S: JsonScalar>(text: &str) -> Result<ConvexDecomposition<S>> {
    from_json::<DecompositionFile>(text, "decomposition")?.parse()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeFile {
    pub source: Vec<Number>,
    pub vertices: Vec<Vec<Number>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facets: Option<Vec<Facet>>,
}

impl ConeFile {
    pub fn new<S: JsonScalar>(cone: &ThermalCone<S>, float: bool) -> Self {
        ConeFile {
            source: numbers(cone.source.as_slice(), float),
            vertices: cone.vertices.iter().map(|v| numbers(v.as_slice(), float)).collect(),
            facets: cone.hull_facets.clone(),
        }
    }

    pub fn parse<S: JsonScalar>(&self) -> Result<ThermalCone<S>> {
        Ok(ThermalCone {
            source: Population::new(parse_numbers(&self.source)?)?,
            vertices: self
                .vertices
                .iter()
                .map(|v| Population::new(parse_numbers(v)?))
                .collect::<Result<_>>()?,
            hull_facets: self.facets.clone(),
        })
    }
}
