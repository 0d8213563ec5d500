//! Weighted particle measures on the real line.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeasureError {
    #[error("empirical measure needs at least one sample")]
    Empty,
    #[error("weight {index} is negative ({value})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("{samples} samples but {weights} weights")]
    LengthMismatch { samples: usize, weights: usize },
    #[error("weights sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("non-finite sample or weight at index {0}")]
    NonFinite(usize),
    #[error("Wasserstein order must be 1 or 2, got {0}")]
    BadOrder(u32),
}

/// Probability measure given by finitely many weighted atoms, sorted by location.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure<S: Scalar> {
    points: Vec<S>,
    weights: Vec<S>,
    mean: S,
    second: S,
}

/// Builds the canonical sorted representation. Without weights every atom gets 1/n.
pub fn make_empirical<S: Scalar>(
    samples: &[S],
    weights: Option<&[S]>,
) -> Result<EmpiricalMeasure<S>, MeasureError> {
    let n = samples.len();
    if n == 0 {
        return Err(MeasureError::Empty);
    }
    let weights: Vec<S> = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(MeasureError::LengthMismatch { samples: n, weights: w.len() });
            }
            w.to_vec()
        }
        None => vec![S::one() / S::from_usize_lossy(n); n],
    };
    for (i, (&x, &w)) in samples.iter().zip(&weights).enumerate() {
        if !x.finite() || !w.finite() {
            return Err(MeasureError::NonFinite(i));
        }
        if w < S::zero() {
            return Err(MeasureError::NegativeWeight { index: i, value: w.as_f64() });
        }
    }
    let total = weights.iter().fold(S::zero(), |a, &w| a + w);
    if (total - S::one()).abs() > S::lit(S::WEIGHT_TOL) {
        return Err(MeasureError::NotNormalized(total.as_f64()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| samples[a].partial_cmp(&samples[b]).expect("finite samples"));
    let points: Vec<S> = order.iter().map(|&i| samples[i]).collect();
    let weights: Vec<S> = order.iter().map(|&i| weights[i]).collect();
    Ok(EmpiricalMeasure::from_sorted(points, weights))
}

impl<S: Scalar> EmpiricalMeasure<S> {
    /// Caller guarantees sorted points and normalized nonnegative weights.
    pub(crate) fn from_sorted(points: Vec<S>, weights: Vec<S>) -> Self {
        let mut mean = S::zero();
        let mut second = S::zero();
        for (&x, &w) in points.iter().zip(&weights) {
            mean += w * x;
            second += w * x * x;
        }
        Self { points, weights, mean, second }
    }

    /// Point mass at `x`.
    pub fn dirac(x: S) -> Self {
        Self::from_sorted(vec![x], vec![S::one()])
    }

    pub fn points(&self) -> &[S] {
        &self.points
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (S, S)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn mean(&self) -> S {
        self.mean
    }

    pub fn variance(&self) -> S {
        let v = self.second - self.mean * self.mean;
        if v > S::zero() {
            v
        } else {
            S::zero()
        }
    }

    /// Every atom moved by `c`.
    pub fn shifted(&self, c: S) -> Self {
        Self::from_sorted(self.points.iter().map(|&x| x + c).collect(), self.weights.clone())
    }

    /// Atom `i` moved by `delta`, re-sorted.
    pub fn with_atom_moved(&self, i: usize, delta: S) -> Self {
        let mut pts = self.points.clone();
        pts[i] += delta;
        make_empirical(&pts, Some(&self.weights)).expect("moving an atom keeps the measure valid")
    }

    /// Atoms displaced by `eta` (aligned with the sorted atoms).
    pub fn displaced(&self, eta: &[S]) -> Result<Self, MeasureError> {
        if eta.len() != self.len() {
            return Err(MeasureError::LengthMismatch { samples: self.len(), weights: eta.len() });
        }
        let pts: Vec<S> = self.points.iter().zip(eta).map(|(&x, &e)| x + e).collect();
        make_empirical(&pts, Some(&self.weights))
    }

    /// Weighted average of `f` over the atoms.
    pub fn expect(&self, mut f: impl FnMut(S) -> S) -> S {
        self.atoms().fold(S::zero(), |acc, (x, w)| acc + w * f(x))
    }
}

/// Weighted mean and raw second moment.
pub fn moments<S: Scalar>(mu: &EmpiricalMeasure<S>) -> (S, S) {
    (mu.mean, mu.second)
}

/// Exact W_q on the line by walking the merged quantile breakpoints.
pub fn wq_distance<S: Scalar>(
    mu: &EmpiricalMeasure<S>,
    nu: &EmpiricalMeasure<S>,
    q: u32,
) -> Result<S, MeasureError> {
    if q != 1 && q != 2 {
        return Err(MeasureError::BadOrder(q));
    }
    let (mut i, mut j) = (0usize, 0usize);
    let mut ri = mu.weights[0];
    let mut rj = nu.weights[0];
    let mut acc = S::zero();
    loop {
        let step = if ri < rj { ri } else { rj };
        let gap = (mu.points[i] - nu.points[j]).abs();
        acc += step * if q == 1 { gap } else { gap * gap };
        ri -= step;
        rj -= step;
        if ri <= S::zero() {
            i += 1;
            if i == mu.len() {
                break;
            }
            ri = mu.weights[i];
        }
        if rj <= S::zero() {
            j += 1;
            if j == nu.len() {
                break;
            }
            rj = nu.weights[j];
        }
    }
    if acc < S::zero() {
        acc = S::zero();
    }
    Ok(if q == 1 { acc } else { acc.sqrt() })
}
