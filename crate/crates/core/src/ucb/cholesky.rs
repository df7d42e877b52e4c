/// Lower-triangular Cholesky factor stored as ragged rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cholesky {
    rows: Vec<Vec<f64>>,
}

impl Cholesky {
    /// Factors a symmetric matrix; `None` if it is not positive definite.
    pub fn factor(a: &[Vec<f64>]) -> Option<Self> {
        let mut l = Cholesky::default();
        for (i, row) in a.iter().enumerate() {
            l.extend(&row[..i], row[i])?;
        }
        Some(l)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row `i` of `L` (length `i + 1`).
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// Appends a row/column `(k, diag)` to the factored matrix. Returns the
    /// new row of `L`, or `None` (factor unchanged) when the pivot is not
    /// positive.
    pub fn extend(&mut self, k: &[f64], diag: f64) -> Option<&[f64]> {
        debug_assert_eq!(k.len(), self.rows.len());
        let mut l = self.solve_lower(k);
        let pivot = diag - l.iter().map(|v| v * v).sum::<f64>();
        if !(pivot > 0.0) || !pivot.is_finite() {
            return None;
        }
        l.push(pivot.sqrt());
        self.rows.push(l);
        self.rows.last().map(|r| r.as_slice())
    }

    /// Forward substitution `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = Vec::with_capacity(b.len());
        for (i, row) in self.rows.iter().enumerate() {
            let dot: f64 = row[..i].iter().zip(&x).map(|(l, v)| l * v).sum();
            x.push((b[i] - dot) / row[i]);
        }
        x
    }

    pub fn max_abs_diff(&self, other: &Cholesky) -> f64 {
        if self.len() != other.len() {
            return f64::INFINITY;
        }
        self.rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstructs_matrix() {
        let a = vec![
            vec![4.0, 2.0, 0.4],
            vec![2.0, 5.0, 1.0],
            vec![0.4, 1.0, 3.0],
        ];
        let l = Cholesky::factor(&a).unwrap();
        for i in 0..3 {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| l.row(i)[k] * l.row(j)[k]).sum();
                assert!((s - a[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(Cholesky::factor(&a).is_none());
    }
}
