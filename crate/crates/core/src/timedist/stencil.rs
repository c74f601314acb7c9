//! Composite interpolatory quadrature on a uniform grid.
//!
//! Each cell `[i, i+1]` is integrated with the interpolating polynomial
//! through up to six neighbouring nodes (centred when possible, one-sided
//! near the ends of a piece). Summing cells gives node weights that equal
//! one in the interior and deviate only on the first and last six nodes.

use std::sync::OnceLock;

/// Interpolation width used for cells; sixth-order accurate.
pub(crate) const WIDTH: usize = 6;

/// Number of nodes at each end of a piece whose weight differs from one.
pub(crate) const END_ZONE: usize = WIDTH;

/// Table of `[m][off]` -> weights of the `m`-point stencil integrating the
/// cell that starts at local offset `off`.
fn table() -> &'static Vec<Vec<Vec<f64>>> {
    static TABLE: OnceLock<Vec<Vec<Vec<f64>>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = vec![Vec::new(); WIDTH + 1];
        for (m, slot) in t.iter_mut().enumerate().skip(2) {
            *slot = (0..m - 1)
                .map(|off| lagrange_cell_weights(m, off))
                .collect();
        }
        t
    })
}

/// Integral over `[off, off+1]` of each Lagrange basis polynomial on the
/// nodes `0..m`.
fn lagrange_cell_weights(m: usize, off: usize) -> Vec<f64> {
    // expand each basis polynomial into monomial coefficients
    (0..m)
        .map(|j| {
            let mut coef = vec![1.0];
            let mut denom = 1.0;
            for k in (0..m).filter(|&k| k != j) {
                let mut next = vec![0.0; coef.len() + 1];
                for (p, c) in coef.iter().enumerate() {
                    next[p + 1] += c;
                    next[p] -= c * k as f64;
                }
                coef = next;
                denom *= j as f64 - k as f64;
            }
            let (a, b) = (off as f64, off as f64 + 1.0);
            coef.iter()
                .enumerate()
                .map(|(p, c)| c * (b.powi(p as i32 + 1) - a.powi(p as i32 + 1)) / (p as f64 + 1.0))
                .sum::<f64>()
                / denom
        })
        .collect()
}

/// Window `(first_node, weights)` integrating cell `i` of a piece with `r`
/// cells (`r + 1` nodes).
pub(crate) fn cell_stencil(i: usize, r: usize) -> (usize, &'static [f64]) {
    debug_assert!(i < r);
    let m = WIDTH.min(r + 1);
    let lo = i.saturating_sub(m / 2 - 1).min(r + 1 - m);
    (lo, &table()[m][i - lo])
}

/// Node weights (in units of the step) for integrating a smooth function
/// sampled on `r + 1` consecutive nodes.
pub(crate) fn node_weights(r: usize) -> Vec<f64> {
    let mut w = vec![0.0; r + 1];
    for i in 0..r {
        let (lo, s) = cell_stencil(i, r);
        for (k, v) in s.iter().enumerate() {
            w[lo + k] += v;
        }
    }
    w
}

/// Cell integrals (in units of the step) of the samples `f`.
pub(crate) fn cell_integrals(f: &[f64]) -> Vec<f64> {
    let r = f.len().saturating_sub(1);
    (0..r)
        .map(|i| {
            let (lo, s) = cell_stencil(i, r);
            s.iter().zip(&f[lo..]).map(|(w, v)| w * v).sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn low_order_cases_match_newton_cotes() {
        assert_eq!(node_weights(0), vec![0.0]);
        let trap = node_weights(1);
        assert_relative_eq!(trap[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(trap[1], 0.5, epsilon = 1e-14);
        let simpson = node_weights(2);
        for (a, b) in simpson.iter().zip([1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn interior_weights_are_one_and_sum_to_length() {
        for r in [3usize, 5, 8, 11, 40] {
            let w = node_weights(r);
            assert_relative_eq!(w.iter().sum::<f64>(), r as f64, epsilon = 1e-12);
            if r >= 2 * END_ZONE {
                for v in &w[END_ZONE..=r - END_ZONE] {
                    assert_relative_eq!(*v, 1.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn exact_for_quintics() {
        let r = 17;
        let f: Vec<f64> = (0..=r)
            .map(|i| {
                let x = i as f64;
                x.powi(5) - 3.0 * x.powi(3) + x
            })
            .collect();
        let w = node_weights(r);
        let q: f64 = w.iter().zip(&f).map(|(a, b)| a * b).sum();
        let x = r as f64;
        let exact = x.powi(6) / 6.0 - 0.75 * x.powi(4) + x * x / 2.0;
        assert_relative_eq!(q, exact, max_relative = 1e-12);
        let cells: f64 = cell_integrals(&f).iter().sum();
        assert_relative_eq!(cells, exact, max_relative = 1e-12);
    }
}
