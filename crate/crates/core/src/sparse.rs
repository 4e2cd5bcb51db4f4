use std::collections::HashMap;

/// Gradient rows for a table of fixed row width, holding only rows that were
/// touched. Rows keep first-touch order, so merging in a fixed order gives a
/// deterministic result.
#[derive(Debug, Clone, Default)]
pub struct SparseRows {
    width: usize,
    rows: Vec<usize>,
    values: Vec<f64>,
    lookup: HashMap<usize, usize>,
}

impl PartialEq for SparseRows {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width && self.rows == other.rows && self.values == other.values
    }
}

impl SparseRows {
    pub fn new(width: usize) -> Self {
        Self {
            width,
            ..Default::default()
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of touched rows.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.rows
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Mutable gradient row, zero-initialized on first touch.
    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        let w = self.width;
        let slot = match self.lookup.get(&row) {
            Some(&s) => s,
            None => {
                let s = self.rows.len();
                self.rows.push(row);
                self.values.resize(self.values.len() + w, 0.0);
                self.lookup.insert(row, s);
                s
            }
        };
        &mut self.values[slot * w..(slot + 1) * w]
    }

    pub fn get(&self, row: usize) -> Option<&[f64]> {
        self.lookup
            .get(&row)
            .map(|&s| &self.values[s * self.width..(s + 1) * self.width])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        let w = self.width;
        self.rows
            .iter()
            .enumerate()
            .map(move |(s, &r)| (r, &self.values[s * w..(s + 1) * w]))
    }

    /// Adds `other` row by row, in `other`'s row order.
    pub fn merge(&mut self, other: &SparseRows) {
        debug_assert_eq!(self.width, other.width);
        for (row, vals) in other.iter() {
            let dst = self.row_mut(row);
            for (d, v) in dst.iter_mut().zip(vals) {
                *d += v;
            }
        }
    }

    /// Dense copy with `num_rows` rows; untouched rows are zero.
    pub fn to_dense(&self, num_rows: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_rows * self.width];
        for (row, vals) in self.iter() {
            out[row * self.width..(row + 1) * self.width].copy_from_slice(vals);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulates_and_densifies() {
        let mut g = SparseRows::new(2);
        g.row_mut(3)[0] += 1.0;
        g.row_mut(1)[1] += 2.0;
        g.row_mut(3)[1] += 0.5;
        assert_eq!(g.row_ids(), &[3, 1]);
        assert_eq!(g.to_dense(4), vec![0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 1.0, 0.5]);
        let mut h = SparseRows::new(2);
        h.row_mut(0)[0] = 4.0;
        h.merge(&g);
        assert_eq!(h.row_ids(), &[0, 3, 1]);
        assert_eq!(h.get(3), Some(&[1.0, 0.5][..]));
        assert_eq!(h.get(2), None);
    }
}
