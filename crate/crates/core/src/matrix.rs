//! Minimal dense square-matrix container. State spaces here are tiny (a
//! handful of modulating states), so nothing fancier than row-major `Vec`
//! storage is warranted.

/// Row-major square matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    a: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            a: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut a = Vec::with_capacity(n * n);
        for r in rows {
            assert_eq!(r.len(), n, "matrix rows must form a square");
            a.extend_from_slice(r);
        }
        SquareMatrix { n, a }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Row sums, useful for stochasticity checks.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    /// True when every state reaches every other through positive entries.
    pub fn is_irreducible(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        if self.n == 1 {
            return true;
        }
        // Reachability closure from each state over the positive-entry graph.
        for start in 0..self.n {
            let mut seen = vec![false; self.n];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                for j in 0..self.n {
                    if !seen[j] && self.get(i, j) > 0.0 {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            if seen.iter().any(|s| !s) {
                return false;
            }
        }
        true
    }
}
