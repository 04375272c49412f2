//! Exactly rounded floating-point summation.
//!
//! Pseudo-perplexity pools log-probabilities over a whole test set. Naive
//! left-to-right summation makes the result depend on tweet order; the
//! accumulator here keeps the running sum as a list of non-overlapping
//! partials (Shewchuk's algorithm, as used by Python's `math.fsum`) so the
//! rounded total is a function of the multiset of inputs alone.

/// Order-independent accumulator over finite `f64` values.
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        debug_assert!(x.is_finite());
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    /// The exact sum, correctly rounded to nearest (ties to even).
    pub fn value(&self) -> f64 {
        round_partials(&self.partials)
    }

    /// Correctly rounded `hi` plus the rounded residual `exact - hi`.
    fn double_double(&self) -> (f64, f64) {
        let hi = self.value();
        let mut rest = self.clone();
        rest.add(-hi);
        (hi, rest.value())
    }

    /// `sum / count`, computed from the double-double form of the sum so
    /// that an exact quotient (e.g. `n` copies of `x` divided by `n`) comes
    /// back as `x` exactly.
    pub fn mean(&self, count: usize) -> f64 {
        let n = count as f64;
        let (hi, lo) = self.double_double();
        let q = hi / n;
        // hi - q*n is exactly representable; the fma computes it without rounding.
        let r = (-q).mul_add(n, hi);
        q + (r + lo) / n
    }
}

impl Extend<f64> for ExactSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = ExactSum::new();
        s.extend(iter);
        s
    }
}

fn round_partials(partials: &[f64]) -> f64 {
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    // Half-way case: the remaining partials decide the rounding direction.
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// Exactly rounded sum of a slice.
pub fn fsum(values: &[f64]) -> f64 {
    values.iter().copied().collect::<ExactSum>().value()
}
