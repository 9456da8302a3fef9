//! Sparse multivariate polynomial algebra.
//!
//! Polynomials are stored as exponent-vector -> coefficient maps in canonical
//! form: keys sorted (BTreeMap), like terms merged, exact-zero coefficients
//! pruned. Canonical form defines equality. Pruning uses the threshold 0.0
//! exactly; an epsilon here would silently alter moment results downstream.
//!
//! Variable indices are 0-based in the API and 1-based in the text format
//! (`x1` is index 0), matching the usual maths notation in fixtures like
//! `"1.0*x1^2*x2 + -3.0*x3"`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A single coefficient times a product of variable powers.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coefficient: f64,
    pub exponents: Vec<u32>,
}

impl Monomial {
    pub fn new(coefficient: f64, exponents: Vec<u32>) -> Self {
        Self {
            coefficient,
            exponents,
        }
    }

    pub fn total_degree(&self) -> u32 {
        self.exponents.iter().sum()
    }
}

/// Sparse multivariate polynomial over a fixed number of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    arity: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    /// The zero polynomial in `arity` variables.
    pub fn zero(arity: usize) -> Self {
        Self {
            arity,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(arity: usize, value: f64) -> Self {
        Self::from_terms(arity, [Monomial::new(value, vec![0; arity])])
            .expect("constant monomial has matching arity")
    }

    /// The polynomial `x_var` (0-based index).
    pub fn coordinate(arity: usize, var: usize) -> Result<Self> {
        if var >= arity {
            return Err(Error::IndexOutOfRange { index: var, arity });
        }
        let mut exps = vec![0; arity];
        exps[var] = 1;
        Self::from_terms(arity, [Monomial::new(1.0, exps)])
    }

    /// Builds a polynomial in canonical form, merging like terms and pruning
    /// zero coefficients.
    pub fn from_terms(arity: usize, monomials: impl IntoIterator<Item = Monomial>) -> Result<Self> {
        let mut terms = BTreeMap::new();
        for m in monomials {
            if m.exponents.len() != arity {
                return Err(Error::DimensionMismatch {
                    expected: arity,
                    got: m.exponents.len(),
                });
            }
            *terms.entry(m.exponents).or_insert(0.0) += m.coefficient;
        }
        terms.retain(|_, c| *c != 0.0);
        Ok(Self { arity, terms })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// Terms in canonical (sorted exponent-vector) order.
    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.terms.iter().map(|(e, &c)| (e.as_slice(), c))
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    /// Largest exponent of any single variable across all terms.
    pub fn max_variable_power(&self) -> u32 {
        self.terms
            .keys()
            .flat_map(|e| e.iter().copied())
            .max()
            .unwrap_or(0)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.arity {
            return Err(Error::DimensionMismatch {
                expected: self.arity,
                got: x.len(),
            });
        }
        let mut acc = 0.0;
        for (exps, coef) in &self.terms {
            let mut term = *coef;
            for (xi, &e) in x.iter().zip(exps.iter()) {
                if e > 0 {
                    term *= xi.powi(e as i32);
                }
            }
            acc += term;
        }
        Ok(acc)
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check_arity(other)?;
        let monomials = self
            .terms
            .iter()
            .chain(other.terms.iter())
            .map(|(e, &c)| Monomial::new(c, e.clone()));
        Self::from_terms(self.arity, monomials)
    }

    pub fn scale(&self, factor: f64) -> Polynomial {
        let mut terms = self.terms.clone();
        for c in terms.values_mut() {
            *c *= factor;
        }
        terms.retain(|_, c| *c != 0.0);
        Polynomial {
            arity: self.arity,
            terms,
        }
    }

    /// Exponent-wise convolution with like-term merging.
    pub fn multiply(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check_arity(other)?;
        let mut terms: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &other.terms {
                let exps: Vec<u32> = ea.iter().zip(eb.iter()).map(|(a, b)| a + b).collect();
                *terms.entry(exps).or_insert(0.0) += ca * cb;
            }
        }
        terms.retain(|_, c| *c != 0.0);
        Ok(Polynomial {
            arity: self.arity,
            terms,
        })
    }

    /// Multiplies by the coordinate `x_var`: every exponent vector has
    /// component `var` incremented, coefficients untouched.
    pub fn multiply_by_coordinate(&self, var: usize) -> Result<Polynomial> {
        if var >= self.arity {
            return Err(Error::IndexOutOfRange {
                index: var,
                arity: self.arity,
            });
        }
        let terms = self
            .terms
            .iter()
            .map(|(e, &c)| {
                let mut exps = e.clone();
                exps[var] += 1;
                (exps, c)
            })
            .collect();
        Ok(Polynomial {
            arity: self.arity,
            terms,
        })
    }

    /// Partial derivative with respect to `x_var`.
    pub fn differentiate(&self, var: usize) -> Result<Polynomial> {
        if var >= self.arity {
            return Err(Error::IndexOutOfRange {
                index: var,
                arity: self.arity,
            });
        }
        let mut terms = BTreeMap::new();
        for (e, &c) in &self.terms {
            if e[var] == 0 {
                continue;
            }
            let mut exps = e.clone();
            exps[var] -= 1;
            let coef = c * f64::from(e[var]);
            if coef != 0.0 {
                terms.insert(exps, coef);
            }
        }
        Ok(Polynomial {
            arity: self.arity,
            terms,
        })
    }

    fn check_arity(&self, other: &Polynomial) -> Result<()> {
        if self.arity != other.arity {
            return Err(Error::DimensionMismatch {
                expected: self.arity,
                got: other.arity,
            });
        }
        Ok(())
    }

    /// Parses the plain-text form `"1.0*x1^2*x2 + -3.0*x3"`: '+'-separated
    /// terms, each a signed decimal coefficient followed by '*'-separated
    /// `x<i>[^<e>]` factors. Whitespace is ignored everywhere.
    pub fn parse(arity: usize, text: &str) -> Result<Polynomial> {
        let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(Error::Parse("empty polynomial".into()));
        }
        if compact == "0" {
            return Ok(Polynomial::zero(arity));
        }
        let mut monomials = Vec::new();
        for term in compact.split('+') {
            if term.is_empty() {
                return Err(Error::Parse(format!("empty term in \"{text}\"")));
            }
            monomials.push(parse_term(arity, term)?);
        }
        Polynomial::from_terms(arity, monomials)
    }
}

fn parse_term(arity: usize, term: &str) -> Result<Monomial> {
    let mut factors = term.split('*');
    let coef_text = factors.next().expect("split yields at least one entry");
    let coefficient: f64 = coef_text
        .parse()
        .map_err(|_| Error::Parse(format!("invalid coefficient \"{coef_text}\" in \"{term}\"")))?;
    let mut exponents = vec![0u32; arity];
    for factor in factors {
        let rest = factor
            .strip_prefix('x')
            .ok_or_else(|| Error::Parse(format!("expected variable factor, got \"{factor}\"")))?;
        let (var_text, exp_text) = match rest.split_once('^') {
            Some((v, e)) => (v, Some(e)),
            None => (rest, None),
        };
        let var: usize = var_text
            .parse()
            .map_err(|_| Error::Parse(format!("invalid variable \"{factor}\"")))?;
        if var == 0 || var > arity {
            return Err(Error::Parse(format!(
                "variable x{var} out of range for {arity} variables"
            )));
        }
        let exp: u32 = match exp_text {
            Some(e) => e
                .parse()
                .map_err(|_| Error::Parse(format!("invalid exponent in \"{factor}\"")))?,
            None => 1,
        };
        exponents[var - 1] += exp;
    }
    Ok(Monomial::new(coefficient, exponents))
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (exps, coef) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{coef}")?;
            for (i, &e) in exps.iter().enumerate() {
                if e == 1 {
                    write!(f, "*x{}", i + 1)?;
                } else if e > 1 {
                    write!(f, "*x{}^{}", i + 1, e)?;
                }
            }
        }
        Ok(())
    }
}

/// Vector-valued polynomial function: an ordered list of components sharing
/// one input arity.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialMap {
    arity: usize,
    components: Vec<Polynomial>,
}

impl PolynomialMap {
    pub fn new(components: Vec<Polynomial>) -> Result<Self> {
        let arity = components
            .first()
            .map(Polynomial::arity)
            .ok_or_else(|| Error::InvalidParameter("polynomial map needs >= 1 component".into()))?;
        for c in &components {
            if c.arity() != arity {
                return Err(Error::DimensionMismatch {
                    expected: arity,
                    got: c.arity(),
                });
            }
        }
        Ok(Self { arity, components })
    }

    /// The identity map on `n` variables.
    pub fn identity(n: usize) -> Self {
        let components = (0..n)
            .map(|i| Polynomial::coordinate(n, i).expect("index in range"))
            .collect();
        Self {
            arity: n,
            components,
        }
    }

    /// Degree-1 map `x -> F x + b`.
    pub fn from_affine(matrix: &DMatrix<f64>, offset: Option<&DVector<f64>>) -> Result<Self> {
        let arity = matrix.ncols();
        if let Some(b) = offset {
            if b.len() != matrix.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: matrix.nrows(),
                    got: b.len(),
                });
            }
        }
        let components = (0..matrix.nrows())
            .map(|i| {
                let mut monomials: Vec<Monomial> = (0..arity)
                    .map(|j| {
                        let mut exps = vec![0; arity];
                        exps[j] = 1;
                        Monomial::new(matrix[(i, j)], exps)
                    })
                    .collect();
                if let Some(b) = offset {
                    monomials.push(Monomial::new(b[i], vec![0; arity]));
                }
                Polynomial::from_terms(arity, monomials)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(components)
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &Polynomial {
        &self.components[i]
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.components.len());
        for (i, c) in self.components.iter().enumerate() {
            out[i] = c.evaluate(x)?;
        }
        Ok(out)
    }

    /// Matrix of componentwise products: entry `(i, j) = self_i * other_j`.
    pub fn outer_product(&self, other: &PolynomialMap) -> Result<Vec<Vec<Polynomial>>> {
        if self.arity != other.arity {
            return Err(Error::DimensionMismatch {
                expected: self.arity,
                got: other.arity,
            });
        }
        self.components
            .iter()
            .map(|fi| {
                other
                    .components
                    .iter()
                    .map(|gj| fi.multiply(gj))
                    .collect::<Result<Vec<_>>>()
            })
            .collect()
    }

    pub fn max_variable_power(&self) -> u32 {
        self.components
            .iter()
            .map(Polynomial::max_variable_power)
            .max()
            .unwrap_or(0)
    }

    pub fn total_degree(&self) -> u32 {
        self.components
            .iter()
            .map(Polynomial::total_degree)
            .max()
            .unwrap_or(0)
    }
}
