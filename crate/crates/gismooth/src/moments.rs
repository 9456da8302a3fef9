//! Exact expectations of polynomials under a multivariate Gaussian.
//!
//! The computation rests on three pieces:
//!
//! 1. the 1-D odd/even moment rule for a zero-mean Gaussian,
//!    `E[z^m] = (m-1)!! * variance^(m/2)` for even `m` and `0` for odd `m`;
//! 2. the change of variables `x = mean + S z` with `S` the orthogonal
//!    eigenbasis of the covariance, which decorrelates the coordinates so the
//!    1-D rule applies per eigen-direction;
//! 3. a multinomial expansion of each `x_i^{m_i}` over the `n + 1` slots
//!    `(mean_i, S_i1 z_1, ..., S_in z_n)`, enumerated by [`CompositionTable`].
//!
//! Cross moments `E[x_g * f(x)]` reuse the same machinery after incrementing
//! the exponent of `x_g` in every term, so no separately-derived coefficient
//! rule is needed.
//!
//! The expansion itself runs as a forward merge over variables: accumulated
//! z-power states live in a dense mixed-radix table (or an ordered map for
//! extreme degrees), so the cost scales with the number of reachable states
//! rather than with the full Cartesian product of compositions.
//!
//! All entry points are pure. A [`MomentContext`] holds one spectral
//! decomposition for a whole batch of expectations against the same belief;
//! composition tables are memoized per thread, never shared across threads.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{spectral_decompose, GaussianBelief, SpectralDecomposition};
use crate::polynomial::{Polynomial, PolynomialMap};

/// Largest accepted power of a single variable. Double-factorial moments of
/// higher powers lose all precision in f64.
pub const MAX_VARIABLE_POWER: u32 = 30;

/// Moment of a unit-mass 1-D Gaussian: `E[z^m]` for `z ~ N(0, variance)`.
///
/// Zero for odd `m`; `(m-1)!! * variance^(m/2)` for even `m`. Variance zero is
/// the Dirac case (`1` for `m = 0`, otherwise `0`), which backward-pass
/// covariances can produce after eigenvalue clamping.
pub fn gaussian_moment_1d(power: u32, variance: f64) -> Result<f64> {
    if variance < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "variance must be nonnegative, got {variance}"
        )));
    }
    Ok(moment_1d_unchecked(power, variance))
}

#[inline]
fn moment_1d_unchecked(power: u32, variance: f64) -> f64 {
    if power % 2 == 1 {
        return 0.0;
    }
    if power == 0 {
        return 1.0;
    }
    let mut double_factorial = 1.0;
    let mut odd = 1;
    while odd < power {
        double_factorial *= f64::from(odd);
        odd += 2;
    }
    double_factorial * variance.powi((power / 2) as i32)
}

/// All ways of writing `total` as an ordered sum of `slots` nonnegative
/// integers, each with its multinomial coefficient `total!/(a_1!...a_s!)`.
#[derive(Debug, Clone)]
pub struct CompositionTable {
    total: u32,
    slots: usize,
    entries: Vec<CompositionEntry>,
}

#[derive(Debug, Clone)]
pub struct CompositionEntry {
    pub parts: Vec<u32>,
    pub multinomial: f64,
}

impl CompositionTable {
    pub fn new(total: u32, slots: usize) -> Self {
        assert!(slots >= 1, "composition needs at least one slot");
        let mut entries = Vec::new();
        let mut parts = vec![0u32; slots];
        enumerate_compositions(total, 0, 1, &mut parts, &mut entries);
        Self {
            total,
            slots,
            entries,
        }
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CompositionEntry] {
        &self.entries
    }
}

fn enumerate_compositions(
    remaining: u32,
    slot: usize,
    multinomial: u128,
    parts: &mut Vec<u32>,
    out: &mut Vec<CompositionEntry>,
) {
    if slot == parts.len() - 1 {
        parts[slot] = remaining;
        out.push(CompositionEntry {
            parts: parts.clone(),
            multinomial: multinomial as f64,
        });
        parts[slot] = 0;
        return;
    }
    for k in 0..=remaining {
        parts[slot] = k;
        enumerate_compositions(
            remaining - k,
            slot + 1,
            multinomial * binomial_u128(remaining, k),
            parts,
            out,
        );
    }
    parts[slot] = 0;
}

pub(crate) fn binomial_u128(n: u32, k: u32) -> u128 {
    debug_assert!(k <= n);
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

thread_local! {
    /// Composition tables depend only on (total, slots), so they are shared
    /// across contexts and time steps. Thread-local keeps the cache free of
    /// cross-thread state; the key space is bounded by the degree guard.
    static COMPOSITION_TABLES: RefCell<HashMap<(u32, usize), Rc<CompositionTable>>> =
        RefCell::new(HashMap::new());
}

fn shared_table(total: u32, slots: usize) -> Rc<CompositionTable> {
    COMPOSITION_TABLES.with(|cache| {
        Rc::clone(
            cache
                .borrow_mut()
                .entry((total, slots))
                .or_insert_with(|| Rc::new(CompositionTable::new(total, slots))),
        )
    })
}

/// State spaces above this size use the ordered-map merge instead of the
/// dense table.
const DENSE_STATE_LIMIT: usize = 1 << 16;

/// Batch scope for expectations against one belief: one spectral
/// decomposition shared across all terms, with the basis flattened for the
/// inner expansion loop and reusable accumulator scratch.
pub struct MomentContext {
    mean: DVector<f64>,
    decomposition: SpectralDecomposition,
    /// Row-major copy of the eigenbasis.
    basis_rows: Vec<f64>,
    scratch: RefCell<DpScratch>,
}

impl MomentContext {
    pub fn new(belief: &GaussianBelief) -> Result<Self> {
        let decomposition = spectral_decompose(belief.covariance())?;
        Ok(Self::from_parts(belief.mean().clone(), decomposition))
    }

    /// Builds a context from an externally supplied factorization. Expectations
    /// are invariant under column reordering and sign flips of the basis (with
    /// eigenvalues permuted alongside), which tests exercise through this
    /// constructor.
    pub fn with_decomposition(
        mean: DVector<f64>,
        decomposition: SpectralDecomposition,
    ) -> Result<Self> {
        if mean.len() != decomposition.dim() {
            return Err(Error::DimensionMismatch {
                expected: decomposition.dim(),
                got: mean.len(),
            });
        }
        Ok(Self::from_parts(mean, decomposition))
    }

    fn from_parts(mean: DVector<f64>, decomposition: SpectralDecomposition) -> Self {
        let n = decomposition.dim();
        let mut basis_rows = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                basis_rows[i * n + j] = decomposition.basis()[(i, j)];
            }
        }
        Self {
            mean,
            decomposition,
            basis_rows,
            scratch: RefCell::new(DpScratch::default()),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `E[prod_i x_i^{m_i}]` under the context's Gaussian.
    pub fn monomial_expectation(&self, exponents: &[u32]) -> Result<f64> {
        let n = self.dim();
        if exponents.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: exponents.len(),
            });
        }
        for &m in exponents {
            if m > MAX_VARIABLE_POWER {
                return Err(Error::DegreeTooHigh {
                    power: m,
                    max: MAX_VARIABLE_POWER,
                });
            }
        }

        let mut scratch = self.scratch.borrow_mut();
        let scratch = &mut *scratch;
        scratch.tables.clear();
        for &m in exponents {
            let table = scratch.table_cache.lookup(m, n + 1);
            scratch.tables.push(table);
        }

        // 1-D moments per eigendirection, tabulated up to the largest total
        // power this monomial can put on one direction.
        let max_total = exponents.iter().sum::<u32>() as usize;
        let stride = max_total + 1;
        scratch.z_moments.clear();
        scratch.z_moments.resize(n * stride, 0.0);
        for j in 0..n {
            let variance = self.decomposition.eigenvalues()[j];
            for t in 0..=max_total {
                scratch.z_moments[j * stride + t] = moment_1d_unchecked(t as u32, variance);
            }
        }

        match dense_state_count(stride, n) {
            Some(state_count) => Ok(self.expectation_dense(scratch, stride, state_count)),
            None => self.expectation_sparse(scratch, stride),
        }
    }

    /// Forward pass over variables, merging accumulated z-power states in a
    /// dense mixed-radix table. The per-entry coefficient (multinomial times
    /// mean and basis powers) is independent of the accumulated state, so
    /// each variable costs |live states| x |nonzero entries| multiply-adds
    /// instead of the full Cartesian product.
    fn expectation_dense(&self, scratch: &mut DpScratch, stride: usize, state_count: usize) -> f64 {
        let n = self.dim();
        scratch.ensure_capacity(state_count);
        let DpScratch {
            a,
            b,
            tables,
            z_moments,
            evaluated,
            ..
        } = scratch;
        let (mut current, mut next) = (a, b);
        current.begin();
        current.add(0, 1.0);

        for (var, table) in tables.iter().enumerate() {
            evaluated.clear();
            let mean_i = self.mean[var];
            let basis_row = &self.basis_rows[var * n..(var + 1) * n];
            'entries: for entry in table.entries() {
                let mut c = entry.multinomial;
                let mean_power = entry.parts[0];
                if mean_power > 0 {
                    if mean_i == 0.0 {
                        continue;
                    }
                    c *= mean_i.powi(mean_power as i32);
                }
                // Mixed-radix offset of this entry's z-power increments.
                let mut offset = 0u32;
                let mut radix_power = 1u32;
                for (&s, &a) in basis_row.iter().zip(&entry.parts[1..]) {
                    if a > 0 {
                        if s == 0.0 {
                            continue 'entries;
                        }
                        c *= s.powi(a as i32);
                        offset += a * radix_power;
                    }
                    radix_power *= stride as u32;
                }
                evaluated.push((offset, c));
            }

            next.begin();
            for slot in 0..current.live() {
                let (state, coefficient) = current.entry(slot);
                for &(offset, c) in evaluated.iter() {
                    next.add(state + offset as usize, coefficient * c);
                }
            }
            std::mem::swap(&mut current, &mut next);
        }

        // Contract the surviving states against the 1-D moments; states with
        // any odd power contribute nothing and are skipped outright.
        let mut total = 0.0;
        'states: for slot in 0..current.live() {
            let (state, coefficient) = current.entry(slot);
            let mut value = coefficient;
            let mut rest = state;
            for j in 0..n {
                let power = rest % stride;
                rest /= stride;
                if power % 2 == 1 {
                    continue 'states;
                }
                value *= z_moments[j * stride + power];
            }
            total += value;
        }
        total
    }

    /// The same forward merge with ordered-map state storage, for degrees
    /// whose dense table would be too large. Keys are mixed-radix packed
    /// into u64.
    fn expectation_sparse(&self, scratch: &mut DpScratch, stride: usize) -> Result<f64> {
        let n = self.dim();
        let tables = &scratch.tables;
        let z_moments = &scratch.z_moments;
        let mut radix_check = 1u64;
        for _ in 0..n {
            radix_check = radix_check.checked_mul(stride as u64).ok_or_else(|| {
                Error::InvalidParameter("expectation state space exceeds the supported size".into())
            })?;
        }

        // Ordered maps keep the accumulation order, and therefore the exact
        // rounding, independent of any per-process hash seed.
        let mut current: BTreeMap<u64, f64> = BTreeMap::from([(0u64, 1.0)]);
        let mut next: BTreeMap<u64, f64> = BTreeMap::new();
        let mut evaluated: Vec<(u64, f64)> = Vec::new();
        for (var, table) in tables.iter().enumerate() {
            evaluated.clear();
            let mean_i = self.mean[var];
            let basis_row = &self.basis_rows[var * n..(var + 1) * n];
            'entries: for entry in table.entries() {
                let mut c = entry.multinomial;
                let mean_power = entry.parts[0];
                if mean_power > 0 {
                    if mean_i == 0.0 {
                        continue;
                    }
                    c *= mean_i.powi(mean_power as i32);
                }
                let mut offset = 0u64;
                let mut radix_power = 1u64;
                for (&s, &a) in basis_row.iter().zip(&entry.parts[1..]) {
                    if a > 0 {
                        if s == 0.0 {
                            continue 'entries;
                        }
                        c *= s.powi(a as i32);
                        offset += u64::from(a) * radix_power;
                    }
                    radix_power *= stride as u64;
                }
                evaluated.push((offset, c));
            }

            next.clear();
            for (&state, &coefficient) in &current {
                for &(offset, c) in &evaluated {
                    *next.entry(state + offset).or_insert(0.0) += coefficient * c;
                }
            }
            std::mem::swap(&mut current, &mut next);
        }

        let mut total = 0.0;
        'states: for (&state, &coefficient) in &current {
            let mut value = coefficient;
            let mut rest = state;
            for j in 0..n {
                let power = (rest % stride as u64) as usize;
                rest /= stride as u64;
                if power % 2 == 1 {
                    continue 'states;
                }
                value *= z_moments[j * stride + power];
            }
            total += value;
        }
        Ok(total)
    }

    /// Linearity over terms: `E[p(x)] = sum_t coef_t * E[monomial_t]`.
    pub fn polynomial_expectation(&self, p: &Polynomial) -> Result<f64> {
        if p.arity() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: p.arity(),
            });
        }
        let mut acc = 0.0;
        for (exponents, coefficient) in p.terms() {
            acc += coefficient * self.monomial_expectation(exponents)?;
        }
        Ok(acc)
    }

    /// Row-wise expectation of a vector-valued map.
    pub fn map_expectation(&self, f: &PolynomialMap) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(f.output_dim());
        for (i, component) in f.components().iter().enumerate() {
            out[i] = self.polynomial_expectation(component)?;
        }
        Ok(out)
    }

    /// `E[x f(x)^T]`: entry `(g, g')` is the expectation of
    /// `x_g * f_{g'}(x)`, realized by incrementing the `x_g` exponent of every
    /// term before integrating.
    pub fn cross_moment_matrix(&self, f: &PolynomialMap) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if f.arity() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: f.arity(),
            });
        }
        let mut out = DMatrix::zeros(n, f.output_dim());
        for (col, component) in f.components().iter().enumerate() {
            for row in 0..n {
                let lifted = component.multiply_by_coordinate(row)?;
                out[(row, col)] = self.polynomial_expectation(&lifted)?;
            }
        }
        Ok(out)
    }

    /// `E[f(x) f(x)^T]`, computed for `i <= j` and mirrored so the result is
    /// exactly symmetric.
    pub fn second_moment_matrix(&self, f: &PolynomialMap) -> Result<DMatrix<f64>> {
        if f.arity() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: f.arity(),
            });
        }
        let m = f.output_dim();
        let mut out = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let product = f.component(i).multiply(f.component(j))?;
                let value = self.polynomial_expectation(&product)?;
                out[(i, j)] = value;
                out[(j, i)] = value;
            }
        }
        Ok(out)
    }
}

/// `stride^n` when it stays within [`DENSE_STATE_LIMIT`].
fn dense_state_count(stride: usize, n: usize) -> Option<usize> {
    let mut count = 1usize;
    for _ in 0..n {
        count = count.checked_mul(stride)?;
        if count > DENSE_STATE_LIMIT {
            return None;
        }
    }
    Some(count)
}

/// Generation-stamped dense accumulator: `begin` invalidates all slots in
/// O(1), `add` merges into a slot and records first touches, so nothing is
/// ever re-zeroed.
#[derive(Default)]
struct DpSide {
    value: Vec<f64>,
    stamp: Vec<u64>,
    touched: Vec<u32>,
    generation: u64,
}

impl DpSide {
    fn ensure(&mut self, len: usize) {
        if self.value.len() < len {
            self.value.resize(len, 0.0);
            self.stamp.resize(len, 0);
        }
    }

    fn begin(&mut self) {
        self.generation += 1;
        self.touched.clear();
    }

    #[inline]
    fn add(&mut self, index: usize, value: f64) {
        if self.stamp[index] == self.generation {
            self.value[index] += value;
        } else {
            self.stamp[index] = self.generation;
            self.value[index] = value;
            self.touched.push(index as u32);
        }
    }

    fn live(&self) -> usize {
        self.touched.len()
    }

    #[inline]
    fn entry(&self, slot: usize) -> (usize, f64) {
        let index = self.touched[slot] as usize;
        (index, self.value[index])
    }
}

/// Per-total memo of composition tables, fronting the thread-local store
/// with a plain vector lookup.
#[derive(Default)]
struct TableCache {
    per_total: Vec<Option<(usize, Rc<CompositionTable>)>>,
}

impl TableCache {
    fn lookup(&mut self, total: u32, slots: usize) -> Rc<CompositionTable> {
        let index = total as usize;
        if index >= self.per_total.len() {
            self.per_total.resize(index + 1, None);
        }
        if let Some((cached_slots, table)) = &self.per_total[index] {
            if *cached_slots == slots {
                return Rc::clone(table);
            }
        }
        let table = shared_table(total, slots);
        self.per_total[index] = Some((slots, Rc::clone(&table)));
        table
    }
}

/// Reusable buffers for the expectation passes; owned per context so calls
/// allocate nothing once warm.
#[derive(Default)]
struct DpScratch {
    a: DpSide,
    b: DpSide,
    tables: Vec<Rc<CompositionTable>>,
    z_moments: Vec<f64>,
    evaluated: Vec<(u32, f64)>,
    table_cache: TableCache,
}

impl DpScratch {
    fn ensure_capacity(&mut self, len: usize) {
        self.a.ensure(len);
        self.b.ensure(len);
    }
}

/// One-shot convenience for [`MomentContext::monomial_expectation`].
pub fn monomial_expectation(exponents: &[u32], belief: &GaussianBelief) -> Result<f64> {
    MomentContext::new(belief)?.monomial_expectation(exponents)
}

/// One-shot convenience for [`MomentContext::polynomial_expectation`].
pub fn polynomial_expectation(p: &Polynomial, belief: &GaussianBelief) -> Result<f64> {
    MomentContext::new(belief)?.polynomial_expectation(p)
}

/// One-shot convenience for [`MomentContext::map_expectation`].
pub fn map_expectation(f: &PolynomialMap, belief: &GaussianBelief) -> Result<DVector<f64>> {
    MomentContext::new(belief)?.map_expectation(f)
}

/// One-shot convenience for [`MomentContext::cross_moment_matrix`].
pub fn cross_moment_matrix(f: &PolynomialMap, belief: &GaussianBelief) -> Result<DMatrix<f64>> {
    MomentContext::new(belief)?.cross_moment_matrix(f)
}

/// One-shot convenience for [`MomentContext::second_moment_matrix`].
pub fn second_moment_matrix(f: &PolynomialMap, belief: &GaussianBelief) -> Result<DMatrix<f64>> {
    MomentContext::new(belief)?.second_moment_matrix(f)
}
