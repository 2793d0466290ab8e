//! Exact finite-sample checks for the assignment generators: uniformity of
//! the random draws and the enumeration oracle's unbiasedness and variance
//! identities.

use std::collections::HashMap;

use tomadjust::randomize::{
    draw_cre, draw_stratified, draw_survey, enumerate_assignments, Assignment, AssignmentPlan,
    RngStream, StratumPlan,
};

fn diff_in_means(y1: &[f64], y0: &[f64], z: &[bool]) -> f64 {
    let n1 = z.iter().filter(|b| **b).count() as f64;
    let n0 = z.len() as f64 - n1;
    let mut s1 = 0.0;
    let mut s0 = 0.0;
    for (i, &zi) in z.iter().enumerate() {
        if zi {
            s1 += y1[i];
        } else {
            s0 += y0[i];
        }
    }
    s1 / n1 - s0 / n0
}

fn sample_var(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

#[test]
fn cre_draws_are_uniform_over_subsets() {
    // n=6, n1=3: 20 subsets, each with probability 0.05.
    let plan = AssignmentPlan::Cre { units: 6, treated: 3 };
    let mut rng = RngStream::new(20_240_601, 0).rng();
    let draws = 60_000;
    let mut counts: HashMap<Vec<bool>, usize> = HashMap::new();
    for _ in 0..draws {
        *counts.entry(draw_cre(&plan, &mut rng).unwrap()).or_insert(0) += 1;
    }
    assert_eq!(counts.len(), 20);
    for (subset, count) in counts {
        let freq = count as f64 / draws as f64;
        assert!(
            (freq - 0.05).abs() <= 0.006,
            "subset {subset:?} frequency {freq}"
        );
    }
}

#[test]
fn stratified_draws_factor_across_strata() {
    let plan = AssignmentPlan::Stratified {
        strata: vec![
            StratumPlan { units: 4, treated: 2 },
            StratumPlan { units: 4, treated: 2 },
        ],
    };
    let mut rng = RngStream::new(5150, 0).rng();
    let draws = 72_000;
    let mut joint: HashMap<(Vec<bool>, Vec<bool>), usize> = HashMap::new();
    let mut first: HashMap<Vec<bool>, usize> = HashMap::new();
    let mut second: HashMap<Vec<bool>, usize> = HashMap::new();
    for _ in 0..draws {
        let z = draw_stratified(&plan, &mut rng).unwrap();
        let (a, b) = (z[..4].to_vec(), z[4..].to_vec());
        *first.entry(a.clone()).or_insert(0) += 1;
        *second.entry(b.clone()).or_insert(0) += 1;
        *joint.entry((a, b)).or_insert(0) += 1;
    }
    assert_eq!(joint.len(), 36);
    for ((a, b), count) in joint {
        let p_joint = count as f64 / draws as f64;
        let p_a = first[&a] as f64 / draws as f64;
        let p_b = second[&b] as f64 / draws as f64;
        assert!(
            (p_joint - p_a * p_b).abs() <= 0.006,
            "joint {p_joint} vs product {}",
            p_a * p_b
        );
    }
}

#[test]
fn single_stratum_matches_cre_distribution() {
    let stratified = AssignmentPlan::Stratified {
        strata: vec![StratumPlan { units: 6, treated: 3 }],
    };
    let cre = AssignmentPlan::Cre { units: 6, treated: 3 };
    let strat_set: Vec<Assignment> = enumerate_assignments(&stratified).unwrap().collect();
    let cre_set: Vec<Assignment> = enumerate_assignments(&cre).unwrap().collect();
    assert_eq!(strat_set, cre_set);
}

#[test]
fn survey_pairs_are_uniform() {
    let plan = AssignmentPlan::Survey { population: 3, sample: 2, treated: 1 };
    let mut rng = RngStream::new(77, 3).rng();
    let draws = 10_000;
    let mut counts: HashMap<Vec<bool>, usize> = HashMap::new();
    for _ in 0..draws {
        let (sampled, z) = draw_survey(&plan, &mut rng).unwrap();
        assert_eq!(z.iter().filter(|b| **b).count(), 1);
        *counts.entry(sampled).or_insert(0) += 1;
    }
    assert_eq!(counts.len(), 3);
    for count in counts.values() {
        let freq = *count as f64 / draws as f64;
        assert!((freq - 1.0 / 3.0).abs() <= 0.02, "pair frequency {freq}");
    }
}

#[test]
fn enumeration_mean_recovers_tau_exactly() {
    // Fixed potential-outcome table, n=6, n1=3.
    let y1 = [1.0, 3.0, 5.0, 7.0, 9.0, 11.0];
    let y0 = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
    let tau = y1.iter().zip(&y0).map(|(a, b)| a - b).sum::<f64>() / 6.0;

    let plan = AssignmentPlan::Cre { units: 6, treated: 3 };
    let mut points = Vec::new();
    for assignment in enumerate_assignments(&plan).unwrap() {
        let Assignment::Units(z) = assignment else { panic!("unit plan") };
        points.push(diff_in_means(&y1, &y0, &z));
    }
    assert_eq!(points.len(), 20);
    let mean = points.iter().sum::<f64>() / points.len() as f64;
    assert!((mean - tau).abs() < 1e-12, "mean {mean} vs tau {tau}");
}

#[test]
fn enumeration_variance_matches_neyman_identity() {
    let y1 = [2.0, 4.0, 1.5, 6.5, 3.0, 5.5];
    let y0 = [1.0, 0.5, 2.5, 3.0, 1.5, 2.0];
    let n = 6.0;
    let tau_units: Vec<f64> = y1.iter().zip(&y0).map(|(a, b)| a - b).collect();
    let tau = tau_units.iter().sum::<f64>() / n;

    let s1 = sample_var(&y1);
    let s0 = sample_var(&y0);
    let s_tau = sample_var(&tau_units);
    let p1 = 0.5;
    let p0 = 0.5;
    let exact = (s1 / p1 + s0 / p0 - s_tau) / n;

    let plan = AssignmentPlan::Cre { units: 6, treated: 3 };
    let mut sq = 0.0;
    let mut count = 0.0;
    for assignment in enumerate_assignments(&plan).unwrap() {
        let Assignment::Units(z) = assignment else { panic!("unit plan") };
        sq += (diff_in_means(&y1, &y0, &z) - tau).powi(2);
        count += 1.0;
    }
    let variance = sq / count;
    assert!(
        (variance - exact).abs() < 1e-12,
        "enumeration variance {variance} vs closed form {exact}"
    );
}

#[test]
fn per_stratum_enumeration_is_unbiased() {
    // Two strata of four units, enumerate all 36 assignments; the weighted
    // stratified estimator averages to tau exactly.
    let y1 = [4.0, 2.0, 6.0, 1.0, 9.0, 3.5, 5.0, 7.5];
    let y0 = [1.0, 0.0, 3.0, 0.5, 4.0, 2.0, 1.0, 3.0];
    let tau = y1.iter().zip(&y0).map(|(a, b)| a - b).sum::<f64>() / 8.0;
    let plan = AssignmentPlan::Stratified {
        strata: vec![
            StratumPlan { units: 4, treated: 2 },
            StratumPlan { units: 4, treated: 2 },
        ],
    };
    let mut sum = 0.0;
    let mut count = 0.0;
    for assignment in enumerate_assignments(&plan).unwrap() {
        let Assignment::Units(z) = assignment else { panic!("unit plan") };
        let tau_a = diff_in_means(&y1[..4], &y0[..4], &z[..4]);
        let tau_b = diff_in_means(&y1[4..], &y0[4..], &z[4..]);
        sum += 0.5 * tau_a + 0.5 * tau_b;
        count += 1.0;
    }
    assert_eq!(count, 36.0);
    assert!((sum / count - tau).abs() < 1e-12);
}

#[test]
fn cluster_enumeration_is_unbiased_via_scaled_totals() {
    // Four clusters with sizes 2,3,2,3; tau over the ten units equals the
    // enumeration mean of the scaled-total difference over C(4,2) splits.
    let sizes = [2usize, 3, 2, 3];
    let y1_units = [1.0, 2.0, 4.0, 0.5, 3.0, 2.5, 1.5, 5.0, 2.0, 3.5];
    let y0_units = [0.5, 1.0, 2.0, 0.0, 1.5, 1.0, 0.5, 2.5, 1.0, 1.5];
    let n_cl: usize = sizes.iter().sum();
    let tau = y1_units
        .iter()
        .zip(&y0_units)
        .map(|(a, b)| a - b)
        .sum::<f64>()
        / n_cl as f64;

    let n_bar = n_cl as f64 / sizes.len() as f64;
    let mut offset = 0;
    let mut totals1 = Vec::new();
    let mut totals0 = Vec::new();
    for &size in &sizes {
        totals1.push(y1_units[offset..offset + size].iter().sum::<f64>() / n_bar);
        totals0.push(y0_units[offset..offset + size].iter().sum::<f64>() / n_bar);
        offset += size;
    }

    let plan = AssignmentPlan::Cluster { clusters: 4, treated: 2 };
    let mut sum = 0.0;
    let mut count = 0.0;
    for assignment in enumerate_assignments(&plan).unwrap() {
        let Assignment::Clusters(zc) = assignment else { panic!("cluster plan") };
        sum += diff_in_means(&totals1, &totals0, &zc);
        count += 1.0;
    }
    assert_eq!(count, 6.0);
    assert!((sum / count - tau).abs() < 1e-12);
}
