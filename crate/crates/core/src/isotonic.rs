//! Weighted isotonic least squares via pool-adjacent-violators.
//!
//! The fit is the weighted least-squares projection of a response series onto
//! the cone of monotone vectors. Each pooled block takes the weighted mean of
//! its members, which is also the left derivative of the least concave (or
//! greatest convex) majorant of the cumulative sum diagram.

use serde::{Deserialize, Serialize};

use crate::error::{MonolocError, Result};

/// Monotonicity constraint of a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    NonIncreasing,
    NonDecreasing,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::NonIncreasing => Direction::NonDecreasing,
            Direction::NonDecreasing => Direction::NonIncreasing,
        }
    }

    /// True when `earlier` followed by `later` breaks the constraint or ties it.
    ///
    /// Equal means pool as well so the block representation stays minimal.
    #[inline]
    fn should_pool(self, earlier: f64, later: f64) -> bool {
        match self {
            Direction::NonIncreasing => earlier <= later,
            Direction::NonDecreasing => earlier >= later,
        }
    }

    #[inline]
    fn is_ordered(self, earlier: f64, later: f64) -> bool {
        match self {
            Direction::NonIncreasing => earlier >= later,
            Direction::NonDecreasing => earlier <= later,
        }
    }
}

/// Responses at sorted, distinct positions with positive weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSeries {
    positions: Vec<f64>,
    responses: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedSeries {
    pub fn new(positions: Vec<f64>, responses: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(MonolocError::EmptyInput);
        }
        if positions.len() != responses.len() || positions.len() != weights.len() {
            return Err(MonolocError::DimensionMismatch {
                expected: positions.len(),
                found: responses.len().min(weights.len()),
            });
        }
        if positions.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(MonolocError::InvalidInput(
                "series positions must be strictly increasing".into(),
            ));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(MonolocError::InvalidInput(
                "series weights must be positive and finite".into(),
            ));
        }
        if responses.iter().any(|r| !r.is_finite()) {
            return Err(MonolocError::InvalidInput("responses must be finite".into()));
        }
        Ok(Self {
            positions,
            responses,
            weights,
        })
    }

    /// Unit-weight series; positions must already be strictly increasing.
    pub fn unweighted(positions: Vec<f64>, responses: Vec<f64>) -> Result<Self> {
        let weights = vec![1.0; positions.len()];
        Self::new(positions, responses, weights)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Right-continuous monotone step function on `[0, domain_upper]`.
///
/// Constant on `[knots[j], knots[j + 1])` with value `values[j]`; flat beyond
/// both ends of the knot range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneStepFunction {
    knots: Vec<f64>,
    values: Vec<f64>,
    direction: Direction,
    domain_upper: f64,
}

impl MonotoneStepFunction {
    pub fn new(
        knots: Vec<f64>,
        values: Vec<f64>,
        direction: Direction,
        domain_upper: f64,
    ) -> Result<Self> {
        if knots.is_empty() {
            return Err(MonolocError::EmptyInput);
        }
        if knots.len() != values.len() {
            return Err(MonolocError::DimensionMismatch {
                expected: knots.len(),
                found: values.len(),
            });
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(MonolocError::InvalidInput(
                "knots must be strictly increasing".into(),
            ));
        }
        if values.windows(2).any(|w| !direction.is_ordered(w[0], w[1])) {
            return Err(MonolocError::InvalidInput(format!(
                "values violate the {direction:?} constraint"
            )));
        }
        Ok(Self {
            knots,
            values,
            direction,
            domain_upper,
        })
    }

    pub(crate) fn from_parts_unchecked(
        knots: Vec<f64>,
        values: Vec<f64>,
        direction: Direction,
        domain_upper: f64,
    ) -> Self {
        debug_assert_eq!(knots.len(), values.len());
        Self {
            knots,
            values,
            direction,
            domain_upper,
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn domain_upper(&self) -> f64 {
        self.domain_upper
    }

    pub fn with_domain_upper(mut self, domain_upper: f64) -> Self {
        self.domain_upper = domain_upper;
        self
    }

    /// Step evaluation. Values beyond `domain_upper` use the last value.
    pub fn evaluate(&self, t: f64) -> f64 {
        // index of the first knot strictly greater than t
        let idx = self.knots.partition_point(|&k| k <= t);
        if idx == 0 {
            self.values[0]
        } else {
            self.values[idx - 1]
        }
    }

    /// Jump locations and signed jump sizes `values[j] - values[j - 1]`.
    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values
            .windows(2)
            .zip(&self.knots[1..])
            .filter(|(w, _)| w[1] != w[0])
            .map(|(w, &k)| (k, w[1] - w[0]))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Free-standing form of [`MonotoneStepFunction::evaluate`].
pub fn evaluate(f: &MonotoneStepFunction, t: f64) -> f64 {
    f.evaluate(t)
}

/// Collapse equal positions into their mean response, weighted by tie count.
///
/// Positions need not be sorted; the output is.
pub fn merge_ties(positions: &[f64], responses: &[f64]) -> Result<WeightedSeries> {
    if positions.is_empty() {
        return Err(MonolocError::EmptyInput);
    }
    if positions.len() != responses.len() {
        return Err(MonolocError::DimensionMismatch {
            expected: positions.len(),
            found: responses.len(),
        });
    }
    if positions.iter().chain(responses).any(|v| !v.is_finite()) {
        return Err(MonolocError::InvalidInput("non-finite series value".into()));
    }
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.sort_by(|&a, &b| positions[a].total_cmp(&positions[b]).then(a.cmp(&b)));

    let mut merged_pos = Vec::with_capacity(order.len());
    let mut merged_resp = Vec::with_capacity(order.len());
    let mut merged_w = Vec::with_capacity(order.len());
    let mut iter = order.into_iter().peekable();
    while let Some(first) = iter.next() {
        let pos = positions[first];
        let mut sum = responses[first];
        let mut count = 1.0;
        while let Some(&next) = iter.peek() {
            if positions[next] != pos {
                break;
            }
            sum += responses[next];
            count += 1.0;
            iter.next();
        }
        merged_pos.push(pos);
        merged_resp.push(sum / count);
        merged_w.push(count);
    }
    Ok(WeightedSeries {
        positions: merged_pos,
        responses: merged_resp,
        weights: merged_w,
    })
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Block {
    pub sum_wy: f64,
    pub sum_w: f64,
    /// number of series entries covered
    pub len: usize,
}

impl Block {
    #[inline]
    pub fn mean(&self) -> f64 {
        self.sum_wy / self.sum_w
    }
}

/// Pool adjacent violators over weighted responses, reusing `blocks` as the
/// stack. On return `blocks` holds the pooled blocks in order.
#[inline]
pub(crate) fn pool_into(
    responses: impl IntoIterator<Item = (f64, f64)>,
    direction: Direction,
    blocks: &mut Vec<Block>,
) {
    blocks.clear();
    for (y, w) in responses {
        let mut cur = Block {
            sum_wy: w * y,
            sum_w: w,
            len: 1,
        };
        while let Some(prev) = blocks.last() {
            if direction.should_pool(prev.mean(), cur.mean()) {
                cur.sum_wy += prev.sum_wy;
                cur.sum_w += prev.sum_w;
                cur.len += prev.len;
                blocks.pop();
            } else {
                break;
            }
        }
        blocks.push(cur);
    }
}

/// Weighted isotonic regression of `series` in the given direction.
///
/// The returned step function has one knot per series position, so it
/// reproduces the fitted vector exactly at the data.
pub fn pava(series: &WeightedSeries, direction: Direction) -> MonotoneStepFunction {
    let mut blocks = Vec::with_capacity(series.len());
    pool_into(
        series
            .responses
            .iter()
            .copied()
            .zip(series.weights.iter().copied()),
        direction,
        &mut blocks,
    );
    let mut values = Vec::with_capacity(series.len());
    for b in &blocks {
        let m = b.mean();
        values.extend(std::iter::repeat_n(m, b.len));
    }
    let domain_upper = series.positions.last().copied().unwrap_or(0.0);
    MonotoneStepFunction::from_parts_unchecked(
        series.positions.clone(),
        values,
        direction,
        domain_upper,
    )
}

/// Fitted values of the isotonic projection of `responses` (unit weights,
/// already in position order).
pub fn isotonic_fit(responses: &[f64], direction: Direction) -> Result<Vec<f64>> {
    if responses.is_empty() {
        return Err(MonolocError::EmptyInput);
    }
    let mut blocks = Vec::new();
    pool_into(responses.iter().map(|&y| (y, 1.0)), direction, &mut blocks);
    let mut out = Vec::with_capacity(responses.len());
    for b in &blocks {
        out.extend(std::iter::repeat_n(b.mean(), b.len));
    }
    Ok(out)
}
