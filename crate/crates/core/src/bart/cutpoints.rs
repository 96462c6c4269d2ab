use crate::data::Matrix;
use crate::error::{Error, Result};

/// Candidate split values per covariate, uniformly spaced over the observed range.
///
/// A row goes left at cutpoint `c` when `x <= c`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutpointGrid {
    cuts: Vec<Vec<f64>>,
    admissible: Vec<bool>,
}

impl CutpointGrid {
    pub fn n_vars(&self) -> usize {
        self.cuts.len()
    }

    pub fn cuts(&self, var: usize) -> &[f64] {
        &self.cuts[var]
    }

    pub fn n_cuts(&self, var: usize) -> usize {
        self.cuts[var].len()
    }

    /// `false` for constant columns, which are never split on.
    pub fn is_admissible(&self, var: usize) -> bool {
        self.admissible[var]
    }

    pub fn admissible_vars(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_vars()).filter(|&v| self.admissible[v])
    }

    /// Number of cutpoints strictly below `x`; the row goes left at cut `j`
    /// exactly when this count is `<= j`.
    #[inline]
    pub fn bin(&self, var: usize, x: f64) -> u16 {
        self.cuts[var].partition_point(|&c| c < x) as u16
    }

    /// Pre-bins every row of `x` against the grid.
    pub fn bin_matrix(&self, x: &Matrix) -> Result<BinnedRows> {
        if x.cols() != self.n_vars() {
            return Err(Error::DimensionMismatch(format!(
                "grid has {} variables, matrix {}",
                self.n_vars(),
                x.cols()
            )));
        }
        let mut bins = Vec::with_capacity(x.rows() * x.cols());
        for r in 0..x.rows() {
            for (v, &value) in x.row(r).iter().enumerate() {
                bins.push(self.bin(v, value));
            }
        }
        Ok(BinnedRows {
            rows: x.rows(),
            vars: x.cols(),
            bins,
        })
    }
}

/// Covariates replaced by their bin index against a [`CutpointGrid`].
#[derive(Debug, Clone)]
pub struct BinnedRows {
    rows: usize,
    vars: usize,
    bins: Vec<u16>,
}

impl BinnedRows {
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn get(&self, row: usize, var: usize) -> u16 {
        self.bins[row * self.vars + var]
    }

    #[inline]
    pub fn goes_left(&self, row: usize, var: usize, cut: usize) -> bool {
        (self.get(row, var) as usize) <= cut
    }

    pub fn concat(mut self, other: &BinnedRows) -> BinnedRows {
        debug_assert_eq!(self.vars, other.vars);
        self.bins.extend_from_slice(&other.bins);
        self.rows += other.rows;
        self
    }
}

/// Builds `n_cut` interior cutpoints per column, evenly spaced between the
/// column minimum and maximum.
pub fn build_cutpoints(x: &Matrix, n_cut: usize) -> Result<CutpointGrid> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::EmptyInput("covariate matrix"));
    }
    if n_cut == 0 || n_cut > u16::MAX as usize - 1 {
        return Err(Error::InvalidConfig(format!(
            "cutpoint count must lie in 1..{}, got {n_cut}",
            u16::MAX - 1
        )));
    }
    let mut cuts = Vec::with_capacity(x.cols());
    let mut admissible = Vec::with_capacity(x.cols());
    for v in 0..x.cols() {
        let (lo, hi) = x
            .column(v)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| (lo.min(z), hi.max(z)));
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Schema(format!("column {v} has non-finite values")));
        }
        if hi > lo {
            let step = (hi - lo) / (n_cut + 1) as f64;
            cuts.push((1..=n_cut).map(|j| lo + j as f64 * step).collect());
            admissible.push(true);
        } else {
            cuts.push(vec![lo]);
            admissible.push(false);
        }
    }
    Ok(CutpointGrid { cuts, admissible })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> Matrix {
        Matrix::new(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn uniform_interior_grid() {
        let grid = build_cutpoints(&column(&[0.0, 0.3, 1.0]), 4).unwrap();
        let want = [0.2, 0.4, 0.6, 0.8];
        for (c, w) in grid.cuts(0).iter().zip(want) {
            assert!((c - w).abs() < 1e-15);
        }
        assert!(grid.cuts(0).windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn constant_column_is_not_splittable() {
        let grid = build_cutpoints(&column(&[2.5, 2.5, 2.5]), 10).unwrap();
        assert!(!grid.is_admissible(0));
        assert_eq!(grid.n_cuts(0), 1);
        assert_eq!(grid.admissible_vars().count(), 0);
    }

    #[test]
    fn dummy_column_has_one_effective_split() {
        let x = column(&[0.0, 1.0, 1.0, 0.0, 1.0]);
        let grid = build_cutpoints(&x, 50).unwrap();
        let binned = grid.bin_matrix(&x).unwrap();
        let routing = |cut: usize| -> Vec<bool> { (0..5).map(|r| binned.goes_left(r, 0, cut)).collect() };
        let first = routing(0);
        assert_eq!(first, vec![true, false, false, true, false]);
        assert!((0..50).all(|c| routing(c) == first));
    }

    #[test]
    fn ties_route_left() {
        let x = column(&[0.0, 0.2, 1.0]);
        let grid = build_cutpoints(&x, 4).unwrap();
        let binned = grid.bin_matrix(&x).unwrap();
        // x = 0.2 sits exactly on cut 0
        assert!(binned.goes_left(1, 0, 0));
        assert!(!binned.goes_left(2, 0, 3));
    }

    #[test]
    fn empty_matrix_errors() {
        assert!(build_cutpoints(&Matrix::zeros(0, 3), 10).is_err());
    }
}
