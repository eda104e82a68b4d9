//! Thomas algorithm for diagonally dominant tridiagonal systems.

/// LU factors of a tridiagonal matrix `(lower, diag, upper)`.
#[derive(Debug, Clone)]
pub(crate) struct Tridiagonal {
    lower: Vec<f64>,
    c_prime: Vec<f64>,
    denom: Vec<f64>,
}

impl Tridiagonal {
    /// `lower[i]` couples row `i + 1` to column `i`, `upper[i]` couples row
    /// `i` to column `i + 1`.
    pub(crate) fn factor(lower: &[f64], diag: &[f64], upper: &[f64]) -> Self {
        let n = diag.len();
        debug_assert_eq!(lower.len() + 1, n);
        debug_assert_eq!(upper.len() + 1, n);
        let mut c_prime = vec![0.0; n.saturating_sub(1)];
        let mut denom = vec![0.0; n];
        denom[0] = diag[0];
        for i in 0..n - 1 {
            c_prime[i] = upper[i] / denom[i];
            denom[i + 1] = diag[i + 1] - lower[i] * c_prime[i];
        }
        Self { lower: lower.to_vec(), c_prime, denom }
    }

    pub(crate) fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] /= self.denom[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i - 1] * rhs[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.c_prime[i] * rhs[i + 1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        // [[4,1,0],[2,5,1],[0,3,6]] x = [1,2,3]
        let t = Tridiagonal::factor(&[2.0, 3.0], &[4.0, 5.0, 6.0], &[1.0, 1.0]);
        let mut x = vec![1.0, 2.0, 3.0];
        t.solve_in_place(&mut x);
        let r = [4.0 * x[0] + x[1], 2.0 * x[0] + 5.0 * x[1] + x[2], 3.0 * x[1] + 6.0 * x[2]];
        for (a, b) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
