use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::{EconError, Result, TestMethod, TestResult};
use crate::special;

/// Smallest share of a column's sum of squares that must remain after
/// projecting out the preceding columns.
const RANK_TOLERANCE: f64 = 1e-12;

/// Relative distance below which a restriction counts as satisfied exactly.
const EXACT_RESTRICTION: f64 = 1e-9;

/// How the coefficient covariance is estimated.
#[derive(Debug, Clone, Copy)]
pub enum Covariance<'a> {
    /// Homoskedastic, `s^2 (X'X)^{-1}`.
    Classical,
    /// White sandwich with the `n / (n - k)` correction.
    Hc1,
    /// Clustered sandwich with the CR1 correction
    /// `G/(G-1) * (n-1)/(n-k)`; one dense cluster code per row.
    Cluster(&'a [usize]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    Classical,
    Hc1,
    Cluster,
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub names: Vec<String>,
    pub coefficients: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub residuals: DVector<f64>,
    pub n: usize,
    pub k: usize,
    pub n_clusters: Option<usize>,
    pub covariance_kind: CovarianceKind,
    pub r_squared: f64,
    /// First-stage F of the excluded instruments, one per endogenous column.
    pub first_stage_f: Option<Vec<f64>>,
}

impl RegressionFit {
    pub fn se(&self, i: usize) -> f64 {
        libm::sqrt(self.covariance[(i, i)].max(0.0))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<Estimate> {
        self.index_of(name).map(|i| Estimate { estimate: self.coefficients[i], se: self.se(i) })
    }

    /// Denominator degrees of freedom for Wald F tests.
    pub fn df_denominator(&self) -> f64 {
        match self.n_clusters {
            Some(g) => (g - 1) as f64,
            None => (self.n - self.k) as f64,
        }
    }
}

/// Maps arbitrary labels to dense codes `0..G` in order of first appearance.
pub fn cluster_codes<T: Ord + Clone>(labels: &[T]) -> Vec<usize> {
    let mut codes = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = codes.len();
            *codes.entry(l.clone()).or_insert(next)
        })
        .collect()
}

fn checked_cholesky(a: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let diag: Vec<f64> = a.diagonal().iter().copied().collect();
    if let Some(column) = diag.iter().position(|d| d.is_nan() || *d <= 0.0) {
        return Err(EconError::SingularDesign { column });
    }
    let chol = Cholesky::new(a).ok_or(EconError::SingularDesign { column: 0 })?;
    let l = chol.l_dirty();
    for (column, d) in diag.iter().enumerate() {
        let pivot = l[(column, column)];
        if pivot * pivot <= RANK_TOLERANCE * d {
            return Err(EconError::SingularDesign { column });
        }
    }
    Ok(chol)
}

fn has_intercept(x: &DMatrix<f64>) -> bool {
    x.column_iter().any(|c| c[0] != 0.0 && c.iter().all(|v| *v == c[0]))
}

fn r_squared(y: &DVector<f64>, residuals: &DVector<f64>, centered: bool) -> f64 {
    let rss = residuals.norm_squared();
    let tss = if centered {
        let mean = y.mean();
        y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
    } else {
        y.norm_squared()
    };
    if tss > 0.0 {
        1.0 - rss / tss
    } else {
        1.0
    }
}

/// `bread * meat * bread` for the chosen covariance. `regressors` are the
/// columns whose scores enter the meat (the fitted first stage for 2SLS).
fn sandwich(
    bread: &DMatrix<f64>,
    regressors: &DMatrix<f64>,
    residuals: &DVector<f64>,
    cov: Covariance<'_>,
) -> Result<(DMatrix<f64>, Option<usize>)> {
    let (n, k) = regressors.shape();
    let dof = (n - k) as f64;
    let (v, clusters) = match cov {
        Covariance::Classical => (bread * (residuals.norm_squared() / dof), None),
        Covariance::Hc1 => {
            let scores = DMatrix::from_fn(n, k, |i, j| regressors[(i, j)] * residuals[i]);
            let meat = scores.transpose() * &scores;
            (bread * meat * bread * (n as f64 / dof), None)
        }
        Covariance::Cluster(codes) => {
            if codes.len() != n {
                return Err(EconError::Dimension(format!("{} cluster codes for {n} rows", codes.len())));
            }
            let dense = cluster_codes(codes);
            let g = dense.iter().max().map_or(0, |m| m + 1);
            if g < 2 {
                return Err(EconError::TooFewObservations { n: g, k: 2 });
            }
            let mut sums = DMatrix::<f64>::zeros(g, k);
            for (i, &c) in dense.iter().enumerate() {
                for j in 0..k {
                    sums[(c, j)] += regressors[(i, j)] * residuals[i];
                }
            }
            let meat = sums.transpose() * &sums;
            let scale = (g as f64 / (g - 1) as f64) * ((n - 1) as f64 / dof);
            (bread * meat * bread * scale, Some(g))
        }
    };
    Ok(((&v + v.transpose()) * 0.5, clusters))
}

fn check_shapes(y: &DVector<f64>, x: &DMatrix<f64>, names: &[&str]) -> Result<()> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(EconError::Dimension(format!("y has {} rows, X has {n}", y.len())));
    }
    if names.len() != k {
        return Err(EconError::Dimension(format!("{} names for {k} columns", names.len())));
    }
    if n <= k {
        return Err(EconError::TooFewObservations { n, k });
    }
    Ok(())
}

fn kind_of(cov: Covariance<'_>) -> CovarianceKind {
    match cov {
        Covariance::Classical => CovarianceKind::Classical,
        Covariance::Hc1 => CovarianceKind::Hc1,
        Covariance::Cluster(_) => CovarianceKind::Cluster,
    }
}

/// Ordinary least squares.
pub fn ols(y: &DVector<f64>, x: &DMatrix<f64>, names: &[&str], cov: Covariance<'_>) -> Result<RegressionFit> {
    check_shapes(y, x, names)?;
    let (n, k) = x.shape();
    let chol = checked_cholesky(x.transpose() * x)?;
    let coefficients = chol.solve(&(x.transpose() * y));
    let residuals = y - x * &coefficients;
    let bread = chol.inverse();
    let (covariance, n_clusters) = sandwich(&bread, x, &residuals, cov)?;
    Ok(RegressionFit {
        names: names.iter().map(|s| s.to_string()).collect(),
        r_squared: r_squared(y, &residuals, has_intercept(x)),
        coefficients,
        covariance,
        residuals,
        n,
        k,
        n_clusters,
        covariance_kind: kind_of(cov),
        first_stage_f: None,
    })
}

/// Two-stage least squares. Columns of `x` listed in `endogenous` are
/// instrumented by `instruments` (the excluded instruments); the remaining
/// columns of `x` instrument themselves. Coefficients keep the column order
/// of `x`.
pub fn tsls(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    names: &[&str],
    endogenous: &[usize],
    instruments: &DMatrix<f64>,
    cov: Covariance<'_>,
) -> Result<RegressionFit> {
    check_shapes(y, x, names)?;
    let (n, k) = x.shape();
    if instruments.nrows() != n {
        return Err(EconError::Dimension(format!("instruments have {} rows, X has {n}", instruments.nrows())));
    }
    if endogenous.iter().any(|&j| j >= k) {
        return Err(EconError::Dimension("endogenous column out of range".into()));
    }
    if instruments.ncols() < endogenous.len() {
        return Err(EconError::Underidentified { instruments: instruments.ncols(), endogenous: endogenous.len() });
    }
    let exogenous: Vec<usize> = (0..k).filter(|j| !endogenous.contains(j)).collect();
    let n_excluded = instruments.ncols();
    let z = DMatrix::from_fn(n, exogenous.len() + n_excluded, |i, j| {
        if j < exogenous.len() {
            x[(i, exogenous[j])]
        } else {
            instruments[(i, j - exogenous.len())]
        }
    });
    let z_chol = checked_cholesky(z.transpose() * &z)?;
    let x_hat = &z * z_chol.solve(&(z.transpose() * x));
    let chol = checked_cholesky(x_hat.transpose() * &x_hat)?;
    let coefficients = chol.solve(&(x_hat.transpose() * y));
    let residuals = y - x * &coefficients;
    let bread = chol.inverse();
    let (covariance, n_clusters) = sandwich(&bread, &x_hat, &residuals, cov)?;

    // First stage: each endogenous column on all instruments, Wald F for
    // the excluded ones.
    let z_names: Vec<String> = (0..z.ncols()).map(|j| format!("z{j}")).collect();
    let z_refs: Vec<&str> = z_names.iter().map(String::as_str).collect();
    let mut first_stage_f = Vec::with_capacity(endogenous.len());
    for &j in endogenous {
        let first = ols(&x.column(j).into_owned(), &z, &z_refs, cov)?;
        let restriction = DMatrix::from_fn(n_excluded, z.ncols(), |r, c| {
            if c == exogenous.len() + r {
                1.0
            } else {
                0.0
            }
        });
        let test = f_test(&first, &restriction, &DVector::zeros(n_excluded))?;
        first_stage_f.push(test.statistic);
    }

    Ok(RegressionFit {
        names: names.iter().map(|s| s.to_string()).collect(),
        r_squared: r_squared(y, &residuals, has_intercept(x)),
        coefficients,
        covariance,
        residuals,
        n,
        k,
        n_clusters,
        covariance_kind: kind_of(cov),
        first_stage_f: Some(first_stage_f),
    })
}

/// Subtracts group means from every column.
pub fn within_transform(data: &DMatrix<f64>, groups: &[usize]) -> Result<DMatrix<f64>> {
    let (n, k) = data.shape();
    if groups.len() != n {
        return Err(EconError::Dimension(format!("{} group codes for {n} rows", groups.len())));
    }
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        let entry = sums.entry(*g).or_insert_with(|| (alloc::vec![0.0; k], 0));
        for j in 0..k {
            entry.0[j] += data[(i, j)];
        }
        entry.1 += 1;
    }
    Ok(DMatrix::from_fn(n, k, |i, j| {
        let (s, count) = &sums[&groups[i]];
        data[(i, j)] - s[j] / *count as f64
    }))
}

/// `w' b` with standard error `sqrt(w' V w)`.
pub fn linear_combination(fit: &RegressionFit, weights: &[f64]) -> Result<Estimate> {
    if weights.len() != fit.k {
        return Err(EconError::Dimension(format!("{} weights for {} coefficients", weights.len(), fit.k)));
    }
    let w = DVector::from_column_slice(weights);
    let estimate = w.dot(&fit.coefficients);
    let variance = (w.transpose() * &fit.covariance * &w)[(0, 0)];
    Ok(Estimate { estimate, se: libm::sqrt(variance.max(0.0)) })
}

/// `d' M^+ d` on the correlation scale, ignoring directions whose variance
/// is negligible next to the largest. `None` when `d` has weight in a
/// direction of zero variance.
fn wald_quadratic(middle: &DMatrix<f64>, diff: &DVector<f64>) -> Option<f64> {
    let q = diff.len();
    let sd: Vec<f64> = (0..q).map(|i| libm::sqrt(middle[(i, i)].max(0.0))).collect();
    let largest_sd = sd.iter().copied().fold(0.0, f64::max);
    let scale = 1.0 + diff.amax();
    let mut keep = Vec::with_capacity(q);
    for i in 0..q {
        if sd[i] > 1e-7 * largest_sd {
            keep.push(i);
        } else if diff[i].abs() > 1e-9 * scale {
            return None;
        }
    }
    let m = keep.len();
    if m == 0 {
        return Some(0.0);
    }
    let scaled = DMatrix::from_fn(m, m, |a, b| middle[(keep[a], keep[b])] / (sd[keep[a]] * sd[keep[b]]));
    let e = DVector::from_fn(m, |a, _| diff[keep[a]] / sd[keep[a]]);
    let eigen = nalgebra::SymmetricEigen::new(scaled);
    let largest = eigen.eigenvalues.amax();
    let mut total = 0.0;
    for (k, &lambda) in eigen.eigenvalues.iter().enumerate() {
        let projection = eigen.eigenvectors.column(k).dot(&e);
        if lambda > 1e-12 * largest {
            total += projection * projection / lambda;
        } else if projection.abs() > 1e-6 * (1.0 + e.amax()) {
            return None;
        }
    }
    Some(total)
}

/// Wald F test of `R b = r` using the fit's covariance.
///
/// A restriction the estimates satisfy to within rounding gives `F = 0`,
/// `p = 1`. A violated restriction with a zero covariance (a noiseless fit)
/// gives `F = inf`, `p = 0`.
pub fn f_test(fit: &RegressionFit, restriction: &DMatrix<f64>, values: &DVector<f64>) -> Result<TestResult> {
    let q = restriction.nrows();
    if q == 0 || restriction.ncols() != fit.k || values.len() != q {
        return Err(EconError::Dimension(format!(
            "restriction is {q}x{}, values {}, coefficients {}",
            restriction.ncols(),
            values.len(),
            fit.k
        )));
    }
    checked_cholesky(restriction * restriction.transpose()).map_err(|_| EconError::RestrictionRank)?;
    let df = Some((q as f64, fit.df_denominator()));
    let diff = restriction * &fit.coefficients - values;
    let scale = 1.0 + values.amax();
    if diff.amax() <= EXACT_RESTRICTION * scale {
        return Ok(TestResult { statistic: 0.0, p_value: 1.0, df, method: TestMethod::WaldF });
    }
    let middle = restriction * &fit.covariance * restriction.transpose();
    let Some(quadratic) = wald_quadratic(&middle, &diff) else {
        return Ok(TestResult { statistic: f64::INFINITY, p_value: 0.0, df, method: TestMethod::WaldF });
    };
    let statistic = quadratic / q as f64;
    let p_value = special::f_sf(statistic, q as f64, fit.df_denominator()).clamp(0.0, 1.0);
    Ok(TestResult { statistic, p_value, df, method: TestMethod::WaldF })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn design(rows: &[[f64; 2]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j])
    }

    #[test]
    fn exact_linear_data() {
        let x = design(&[[1.0, 1.0], [1.0, 2.0], [1.0, 3.0], [1.0, 4.0]]);
        let y = DVector::from_vec(vec![2.0, 4.0, 6.0, 8.0]);
        let codes = [0, 0, 1, 1];
        let fit = ols(&y, &x, &["const", "x"], Covariance::Cluster(&codes)).unwrap();
        assert_abs_diff_eq!(fit.coefficients[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[0], 0.0, epsilon = 1e-12);
        assert!(fit.residuals.amax() < 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
        assert_eq!(fit.n_clusters, Some(2));
    }

    #[test]
    fn hand_computed_ols_and_classical_se() {
        // x = 1..5, y = (1, 3, 2, 5, 4): slope 0.8, intercept 0.6,
        // RSS = 3.6, s^2 = 1.2, Var(slope) = 1.2 / 10.
        let x = design(&[[1.0, 1.0], [1.0, 2.0], [1.0, 3.0], [1.0, 4.0], [1.0, 5.0]]);
        let y = DVector::from_vec(vec![1.0, 3.0, 2.0, 5.0, 4.0]);
        let fit = ols(&y, &x, &["const", "x"], Covariance::Classical).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[1], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.covariance[(1, 1)], 0.12, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0 - 3.6 / 10.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let x = design(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(ols(&y, &x, &["a", "b"], Covariance::Classical), Err(EconError::SingularDesign { .. })));
        let zero = design(&[[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]);
        assert_eq!(ols(&y, &zero, &["a", "b"], Covariance::Classical), Err(EconError::SingularDesign { column: 1 }));
    }

    #[test]
    fn singleton_clusters_equal_hc1() {
        let x = design(&[[1.0, 0.3], [1.0, -1.2], [1.0, 2.2], [1.0, 0.9], [1.0, -0.4], [1.0, 1.7]]);
        let y = DVector::from_vec(vec![0.1, -2.0, 3.1, 0.7, 0.2, 2.9]);
        let hc1 = ols(&y, &x, &["c", "x"], Covariance::Hc1).unwrap();
        let codes: Vec<usize> = (0..6).collect();
        let cr1 = ols(&y, &x, &["c", "x"], Covariance::Cluster(&codes)).unwrap();
        assert!((hc1.covariance - cr1.covariance).amax() < 1e-14);
    }

    #[test]
    fn within_transform_examples() {
        let data = DMatrix::from_row_slice(4, 2, &[1.0, 5.0, 3.0, 5.0, 10.0, 7.0, 20.0, 7.0]);
        let out = within_transform(&data, &[0, 0, 1, 1]).unwrap();
        assert_eq!(out.column(0).as_slice(), &[-1.0, 1.0, -5.0, 5.0]);
        assert_eq!(out.column(1).as_slice(), &[0.0; 4]);
        let single = within_transform(&data, &[3, 3, 3, 3]).unwrap();
        assert_abs_diff_eq!(single[(0, 0)], 1.0 - 8.5, epsilon = 1e-15);
    }

    #[test]
    fn two_group_within_slope() {
        // Group A: x = 1, 2, 3 with y = 1, 3, 5 (+0); group B: x = 1, 2, 3
        // with y = 12, 14, 16 after a level shift. Within slope is 2.
        let x = DMatrix::from_column_slice(6, 1, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 12.0, 14.0, 16.0]);
        let groups = [0, 0, 0, 1, 1, 1];
        let xt = within_transform(&x, &groups).unwrap();
        let yt = within_transform(&DMatrix::from_column_slice(6, 1, y.as_slice()), &groups).unwrap();
        let fit = ols(&yt.column(0).into_owned(), &xt, &["x"], Covariance::Classical).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_combination_hand_case() {
        let fit = RegressionFit {
            names: vec!["a".into(), "b".into()],
            coefficients: DVector::from_vec(vec![1.0, 2.0]),
            covariance: DMatrix::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.09]),
            residuals: DVector::zeros(3),
            n: 3,
            k: 2,
            n_clusters: None,
            covariance_kind: CovarianceKind::Classical,
            r_squared: 0.0,
            first_stage_f: None,
        };
        let e = linear_combination(&fit, &[1.0, 1.0]).unwrap();
        assert_eq!(e.estimate, 3.0);
        // 0.04 + 0.09 + 2 * 0.01
        assert_abs_diff_eq!(e.se, libm::sqrt(0.15), epsilon = 1e-15);
        let unit = linear_combination(&fit, &[0.0, 1.0]).unwrap();
        assert_eq!((unit.estimate, unit.se), (2.0, fit.se(1)));
        assert!(linear_combination(&fit, &[1.0]).is_err());
    }

    #[test]
    fn f_test_cases() {
        let x = design(&[[1.0, 1.0], [1.0, 2.0], [1.0, 3.0], [1.0, 4.0], [1.0, 5.0]]);
        let y = DVector::from_vec(vec![1.0, 3.0, 2.0, 5.0, 4.0]);
        let fit = ols(&y, &x, &["const", "x"], Covariance::Classical).unwrap();
        let r = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let exact = f_test(&fit, &r, &DVector::from_vec(vec![0.8])).unwrap();
        assert_eq!((exact.statistic, exact.p_value), (0.0, 1.0));
        // t = 0.8 / sqrt(0.12), F = t^2 = 5.3333 with (1, 3) df.
        let zero = f_test(&fit, &r, &DVector::from_vec(vec![0.0])).unwrap();
        assert_abs_diff_eq!(zero.statistic, 0.64 / 0.12, epsilon = 1e-10);
        assert_eq!(zero.df, Some((1.0, 3.0)));
        assert!(zero.p_value > 0.05 && zero.p_value < 0.2);
        let dup = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 2.0]);
        assert_eq!(f_test(&fit, &dup, &DVector::zeros(2)), Err(EconError::RestrictionRank));
    }

    #[test]
    fn self_instrumented_tsls_is_ols() {
        let x = design(&[[1.0, 0.3], [1.0, -1.2], [1.0, 2.2], [1.0, 0.9], [1.0, -0.4], [1.0, 1.7]]);
        let y = DVector::from_vec(vec![0.1, -2.0, 3.1, 0.7, 0.2, 2.9]);
        let codes = [0, 0, 1, 1, 2, 2];
        let a = ols(&y, &x, &["c", "x"], Covariance::Cluster(&codes)).unwrap();
        let z = x.columns(1, 1).into_owned();
        let b = tsls(&y, &x, &["c", "x"], &[1], &z, Covariance::Cluster(&codes)).unwrap();
        assert!((a.coefficients - &b.coefficients).amax() < 1e-12);
        assert!((a.covariance - &b.covariance).amax() < 1e-12);
        // The first stage fits perfectly.
        assert!(b.first_stage_f.unwrap()[0] > 1e6);
    }

    #[test]
    fn tsls_underidentified() {
        let x = design(&[[1.0, 0.3], [1.0, -1.2], [1.0, 2.2], [1.0, 0.9]]);
        let y = DVector::from_vec(vec![0.1, -2.0, 3.1, 0.7]);
        let z = DMatrix::<f64>::zeros(4, 0);
        assert!(matches!(
            tsls(&y, &x, &["c", "x"], &[1], &z, Covariance::Classical),
            Err(EconError::Underidentified { .. })
        ));
    }

    #[test]
    fn codes_are_dense() {
        assert_eq!(cluster_codes(&["b", "a", "b", "c"]), vec![0, 1, 0, 2]);
    }
}
