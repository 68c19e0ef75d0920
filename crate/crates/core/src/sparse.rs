use serde::{Deserialize, Serialize};

/// A sparse feature vector: `(column, value)` pairs sorted by column, with no
/// explicit zeros.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SparseRow {
    entries: Vec<(u32, f64)>,
}

impl SparseRow {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a row from unsorted pairs; duplicate columns are summed and zeros dropped.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|&(c, _)| c);
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(pairs.len());
        for (c, v) in pairs {
            match entries.last_mut() {
                Some((last, acc)) if *last == c => *acc += v,
                _ => entries.push((c, v)),
            }
        }
        entries.retain(|&(_, v)| v != 0.0);
        Self { entries }
    }

    pub fn get(&self, column: u32) -> f64 {
        self.entries
            .binary_search_by_key(&column, |&(c, _)| c)
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest column index plus one, or zero for an empty row.
    pub fn min_width(&self) -> usize {
        self.entries.last().map_or(0, |&(c, _)| c as usize + 1)
    }

    pub fn push_column(&mut self, column: u32, value: f64) {
        debug_assert!(self.entries.last().is_none_or(|&(c, _)| c < column));
        if value != 0.0 {
            self.entries.push((column, value));
        }
    }

    pub fn to_dense(&self, width: usize) -> Vec<f64> {
        let mut out = vec![0.0; width];
        for &(c, v) in &self.entries {
            out[c as usize] = v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_pairs_merges_and_sorts() {
        let row = SparseRow::from_pairs(vec![(5, 1.0), (2, 2.0), (5, 1.0), (3, 0.0)]);
        assert_eq!(row.entries(), &[(2, 2.0), (5, 2.0)]);
        assert_eq!(row.get(5), 2.0);
        assert_eq!(row.get(4), 0.0);
        assert_eq!(row.min_width(), 6);
    }
}
