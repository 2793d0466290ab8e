//! Cluster randomized experiments, analyzed as a completely randomized
//! experiment on scaled cluster totals.

use super::cre::tom_cre;
use super::{group_by_label, Dataset, EstimateReport, EstimatorError};
use crate::numkit::Matrix;

/// Collapses the unit-level data to one row per cluster and reruns the
/// minority-weighted CRE regression there.
///
/// Cluster totals are scaled by the average cluster size: the outcome becomes
/// `sum_j y_ij / nbar` and likewise for every analysis covariate. The
/// cluster-level regressors are, in order, any cluster-level covariates, the
/// scaled covariate totals, and the cluster size; the size column is dropped
/// when all clusters are equal since it would duplicate the intercept.
pub fn tom_cluster(ds: &Dataset, alpha: f64) -> Result<EstimateReport, EstimatorError> {
    let labels = ds
        .cluster()
        .ok_or(EstimatorError::MissingLabels("cluster"))?;
    let groups = group_by_label(labels);
    let m = groups.len();
    let n_bar = ds.n() as f64 / m as f64;

    let mut z_cluster = Vec::with_capacity(m);
    let mut y_scaled = Vec::with_capacity(m);
    let mut sizes = Vec::with_capacity(m);
    for (label, units) in &groups {
        let z0 = ds.z()[units[0]];
        if units.iter().any(|&i| ds.z()[i] != z0) {
            return Err(EstimatorError::MixedClusterTreatment {
                label: label.clone(),
            });
        }
        z_cluster.push(z0);
        y_scaled.push(units.iter().map(|&i| ds.y()[i]).sum::<f64>() / n_bar);
        sizes.push(units.len() as f64);
    }

    let mut covariate_cols: Vec<Vec<f64>> = Vec::new();
    if let Some(c) = ds.cluster_covariates() {
        for j in 0..c.n_cols() {
            covariate_cols.push(groups.iter().map(|(_, units)| c.get(units[0], j)).collect());
        }
    }
    if let Some(x) = ds.x() {
        for j in 0..x.n_cols() {
            covariate_cols.push(
                groups
                    .iter()
                    .map(|(_, units)| units.iter().map(|&i| x.get(i, j)).sum::<f64>() / n_bar)
                    .collect(),
            );
        }
    }
    let sizes_vary = sizes.iter().any(|s| *s != sizes[0]);
    if sizes_vary {
        covariate_cols.push(sizes);
    }

    let mut builder = Dataset::builder(y_scaled, z_cluster);
    if !covariate_cols.is_empty() {
        builder = builder.covariates(Matrix::from_columns(&covariate_cols)?);
    }
    let collapsed = builder.build()?;

    let mut report = tom_cre(&collapsed, alpha)?;
    report.estimator = "tom_cluster".into();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_clusters_match_tom_cre_exactly() {
        let y = vec![2.0, 4.0, 3.5, 0.5, 1.0, 1.5, 2.5, 0.0];
        let z = vec![true, true, true, false, false, false, true, false];
        let x = Matrix::from_columns(&[vec![0.3, -1.0, 0.8, 0.1, -0.4, 1.2, 0.9, -0.2]]).unwrap();
        let labels: Vec<String> = (0..8).map(|i| format!("c{i}")).collect();
        let ds = Dataset::builder(y.clone(), z.clone())
            .covariates(x.clone())
            .cluster(labels)
            .build()
            .unwrap();
        let plain = Dataset::builder(y, z).covariates(x).build().unwrap();

        let clustered = tom_cluster(&ds, 0.05).unwrap();
        let cre = tom_cre(&plain, 0.05).unwrap();
        assert_eq!(clustered.point, cre.point);
        assert_eq!(clustered.variances, cre.variances);
    }

    #[test]
    fn equal_sizes_without_covariates_is_cluster_diff_in_means() {
        // Three clusters of two units each per arm would leave one arm short;
        // use four clusters of two.
        let y = vec![1.0, 3.0, 2.0, 2.0, 0.0, 1.0, 1.0, 0.0];
        let z = vec![true, true, true, true, false, false, false, false];
        let labels: Vec<String> =
            vec!["a", "a", "b", "b", "c", "c", "d", "d"].into_iter().map(String::from).collect();
        let ds = Dataset::builder(y, z).cluster(labels).build().unwrap();
        let report = tom_cluster(&ds, 0.05).unwrap();
        // nbar = 2; scaled totals are (2.0, 2.0) treated and (0.5, 0.5) control.
        assert_eq!(report.point, 1.5);
    }

    #[test]
    fn mixed_treatment_within_cluster_fails() {
        let y = vec![1.0, 2.0, 3.0, 4.0];
        let z = vec![true, false, true, false];
        let labels: Vec<String> =
            vec!["a", "a", "b", "b"].into_iter().map(String::from).collect();
        let ds = Dataset::builder(y, z).cluster(labels).build().unwrap();
        assert!(matches!(
            tom_cluster(&ds, 0.05),
            Err(EstimatorError::MixedClusterTreatment { .. })
        ));
    }
}
