//! Exact sorting of projected coordinates.
//!
//! Projections of a point cloud are spread fairly evenly over their range,
//! so a distribution pass into `n` equal-width buckets followed by a cheap
//! fix-up runs in expected linear time. Bucket indices are a monotone
//! function of the value, so the output is exactly the sorted input.

/// Buckets above this size are sorted individually with a comparison sort.
const BUCKET_LIMIT: u32 = 24;
const SMALL_INPUT: usize = 64;

/// Reusable buffers for sorting one sample at a time.
#[derive(Debug, Default, Clone)]
pub(crate) struct SortScratch {
    values: Vec<f64>,
    ends: Vec<u32>,
}

/// Adding 2^52 leaves the nearest integer to a value in `[0, 2^32)` in the
/// low mantissa bits.
const ROUNDING_SHIFT: f64 = 4_503_599_627_370_496.0;

fn min_max(v: &[f64]) -> (f64, f64) {
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    let chunks = v.chunks_exact(4);
    let tail = chunks.remainder();
    for c in chunks {
        for k in 0..4 {
            lo[k] = if c[k] < lo[k] { c[k] } else { lo[k] };
            hi[k] = if c[k] > hi[k] { c[k] } else { hi[k] };
        }
    }
    for &x in tail {
        lo[0] = lo[0].min(x);
        hi[0] = hi[0].max(x);
    }
    (lo[0].min(lo[1]).min(lo[2].min(lo[3])), hi[0].max(hi[1]).max(hi[2].max(hi[3])))
}

/// Branch-free compare-exchange of adjacent pairs starting at `offset`.
fn transposition_pass(v: &mut [f64], offset: usize) {
    for pair in v[offset..].chunks_exact_mut(2) {
        let (a, b) = (pair[0], pair[1]);
        pair[0] = a.min(b);
        pair[1] = a.max(b);
    }
}

fn insertion_sort(v: &mut [f64]) {
    for i in 1..v.len() {
        let x = v[i];
        let mut j = i;
        while j > 0 && v[j - 1] > x {
            v[j] = v[j - 1];
            j -= 1;
        }
        v[j] = x;
    }
}

impl SortScratch {
    /// Returns the (finite) values of `v` sorted ascending, stored in `self`.
    pub(crate) fn sorted(&mut self, v: &[f64]) -> &[f64] {
        let n = v.len();
        let (lo, hi) = min_max(v);
        let width = hi - lo;
        if !(SMALL_INPUT..1 << 31).contains(&n) || !(width.is_finite() && width > 0.0) {
            self.values.clear();
            self.values.extend_from_slice(v);
            self.values.sort_unstable_by(f64::total_cmp);
            return &self.values;
        }
        // rounds (x - lo) * n / width to an integer in [0, n]
        let scale = n as f64 / width;
        let key = |x: f64| (((x - lo) * scale + ROUNDING_SHIFT).to_bits() as u32).min(n as u32) as usize;
        self.ends.clear();
        self.ends.resize(n + 1, 0);
        for &x in v {
            self.ends[key(x)] += 1;
        }
        let mut total = 0;
        let mut largest = 0;
        for e in self.ends.iter_mut() {
            largest = largest.max(*e);
            total += *e;
            *e = total;
        }
        if self.values.len() != n {
            self.values.resize(n, 0.0);
        }
        for &x in v.iter().rev() {
            let slot = &mut self.ends[key(x)];
            *slot -= 1;
            self.values[*slot as usize] = x;
        }
        // ends[b] is now the start of bucket b. Buckets are ordered, so any
        // remaining inversion lies inside one bucket.
        if largest <= BUCKET_LIMIT {
            // two odd-even rounds sort most small buckets without branches;
            // the insertion pass then only verifies and fixes stragglers
            for _ in 0..2 {
                transposition_pass(&mut self.values, 0);
                transposition_pass(&mut self.values, 1);
            }
            insertion_sort(&mut self.values);
        } else {
            for b in 0..=n {
                let end = if b < n { self.ends[b + 1] as usize } else { n };
                let bucket = &mut self.values[self.ends[b] as usize..end];
                if bucket.len() > 1 {
                    bucket.sort_unstable_by(f64::total_cmp);
                }
            }
        }
        &self.values
    }
}
