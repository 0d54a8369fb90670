//! Performance functions `h: R^n -> R`.
//!
//! Every shipped variant is piecewise affine, so convexity, concavity and the
//! Euclidean Lipschitz constant are known exactly from the structure.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm};

/// One affine piece `a·y + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub a: Vec<f64>,
    pub b: f64,
}

impl AffinePiece {
    pub fn eval(&self, y: &[f64]) -> f64 {
        dot(&self.a, y) + self.b
    }

    fn negated(&self) -> Self {
        Self {
            a: self.a.iter().map(|v| -v).collect(),
            b: -self.b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerfFn {
    Affine { a: Vec<f64>, b: f64 },
    /// `max_i a_i·y + b_i`.
    PiecewiseMaxAffine { pieces: Vec<AffinePiece> },
    /// Scalar `1 - y`.
    OneMinusY,
    /// Scalar `|target - y|`.
    AbsDeviation { target: f64 },
    /// `max_{i != c} y_i - y_c`; negative means the true class wins.
    Margin { true_class: usize, classes: usize },
    /// `-h`; turns a convex function into a concave one and back.
    Negated { inner: Box<PerfFn> },
}

impl PerfFn {
    pub fn negated(self) -> Self {
        match self {
            PerfFn::Negated { inner } => *inner,
            h => PerfFn::Negated { inner: Box::new(h) },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PerfFn::Affine { a, .. } if a.is_empty() => {
                Err(Error::BadDimension("affine function with empty gradient".into()))
            }
            PerfFn::PiecewiseMaxAffine { pieces } => {
                let first = pieces
                    .first()
                    .ok_or_else(|| Error::BadDimension("piecewise function without pieces".into()))?;
                if first.a.is_empty() || pieces.iter().any(|p| p.a.len() != first.a.len()) {
                    return Err(Error::BadDimension("pieces disagree on dimension".into()));
                }
                Ok(())
            }
            PerfFn::Margin {
                true_class,
                classes,
            } if *classes < 2 || true_class >= classes => Err(Error::BadDimension(format!(
                "margin with class {true_class} of {classes}"
            ))),
            PerfFn::Negated { inner } => inner.validate(),
            _ => Ok(()),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            PerfFn::Affine { a, .. } => a.len(),
            PerfFn::PiecewiseMaxAffine { pieces } => pieces.first().map_or(0, |p| p.a.len()),
            PerfFn::OneMinusY | PerfFn::AbsDeviation { .. } => 1,
            PerfFn::Margin { classes, .. } => *classes,
            PerfFn::Negated { inner } => inner.input_dim(),
        }
    }

    pub fn is_convex(&self) -> bool {
        match self {
            PerfFn::Negated { inner } => inner.is_concave(),
            _ => true,
        }
    }

    pub fn is_concave(&self) -> bool {
        match self {
            PerfFn::Affine { .. } | PerfFn::OneMinusY => true,
            PerfFn::PiecewiseMaxAffine { pieces } => pieces.len() == 1,
            PerfFn::AbsDeviation { .. } | PerfFn::Margin { .. } => false,
            PerfFn::Negated { inner } => inner.is_convex(),
        }
    }

    pub fn eval(&self, y: &[f64]) -> Result<f64> {
        check_dim(self.input_dim(), y.len())?;
        Ok(self.eval_unchecked(y))
    }

    pub(crate) fn eval_unchecked(&self, y: &[f64]) -> f64 {
        match self {
            PerfFn::Affine { a, b } => dot(a, y) + b,
            PerfFn::PiecewiseMaxAffine { pieces } => pieces
                .iter()
                .map(|p| p.eval(y))
                .fold(f64::NEG_INFINITY, f64::max),
            PerfFn::OneMinusY => 1.0 - y[0],
            PerfFn::AbsDeviation { target } => (target - y[0]).abs(),
            PerfFn::Margin { true_class, .. } => {
                let runner_up = y
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i != true_class)
                    .map(|(_, v)| *v)
                    .fold(f64::NEG_INFINITY, f64::max);
                runner_up - y[*true_class]
            }
            PerfFn::Negated { inner } => -inner.eval_unchecked(y),
        }
    }

    /// Lipschitz constant under the Euclidean norm.
    pub fn lipschitz_const(&self) -> f64 {
        match self {
            PerfFn::Affine { a, .. } => norm(a),
            PerfFn::PiecewiseMaxAffine { pieces } => {
                pieces.iter().map(|p| norm(&p.a)).fold(0.0, f64::max)
            }
            PerfFn::OneMinusY | PerfFn::AbsDeviation { .. } => 1.0,
            // Each piece has gradient e_i - e_c.
            PerfFn::Margin { .. } => std::f64::consts::SQRT_2,
            PerfFn::Negated { inner } => inner.lipschitz_const(),
        }
    }

    /// Exact `max_i a_i·y + b_i` form.
    pub fn as_piecewise(&self) -> Result<Vec<AffinePiece>> {
        match self {
            PerfFn::Affine { a, b } => Ok(vec![AffinePiece { a: a.clone(), b: *b }]),
            PerfFn::PiecewiseMaxAffine { pieces } => Ok(pieces.clone()),
            PerfFn::OneMinusY => Ok(vec![AffinePiece { a: vec![-1.0], b: 1.0 }]),
            PerfFn::AbsDeviation { target } => Ok(vec![
                AffinePiece { a: vec![1.0], b: -target },
                AffinePiece { a: vec![-1.0], b: *target },
            ]),
            PerfFn::Margin {
                true_class,
                classes,
            } => Ok((0..*classes)
                .filter(|i| i != true_class)
                .map(|i| {
                    let mut a = vec![0.0; *classes];
                    a[i] = 1.0;
                    a[*true_class] = -1.0;
                    AffinePiece { a, b: 0.0 }
                })
                .collect()),
            PerfFn::Negated { inner } => match inner.as_piecewise()?.as_slice() {
                [single] => Ok(vec![single.negated()]),
                _ => Err(Error::NotRepresentable),
            },
        }
    }

    /// Pieces of the `min_i c_i·y + d_i` form of a concave function.
    pub fn concave_pieces(&self) -> Result<Vec<AffinePiece>> {
        if !self.is_concave() {
            return Err(Error::NotConcave);
        }
        match self {
            PerfFn::Negated { inner } => Ok(inner
                .as_piecewise()?
                .iter()
                .map(AffinePiece::negated)
                .collect()),
            // Concave non-negated variants are single affine pieces.
            h => h.as_piecewise(),
        }
    }

    /// Bound on `|h|` over the ball of radius `radius` about the origin.
    pub fn h_max(&self, radius: f64) -> Result<f64> {
        let pieces = match self {
            PerfFn::Negated { inner } => inner.as_piecewise()?,
            h => h.as_piecewise()?,
        };
        Ok(pieces
            .iter()
            .map(|p| norm(&p.a) * radius + p.b.abs())
            .fold(0.0, f64::max))
    }
}
