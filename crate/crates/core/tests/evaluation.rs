mod common;

use dense_rsf::data::{CovariateSpec, Schema};
use dense_rsf::evaluation::*;
use dense_rsf::forest::SplitRule;
use dense_rsf::profile::{ProfileNode, ProfileTree};
use dense_rsf::simgen::Scenario;
use dense_rsf::survival::{cox_fit, logrank_test};
use dense_rsf::SurvivalDataset;
use ndarray::Array2;
use rand::Rng;

fn small_axis() -> GridAxis {
    GridAxis {
        start: -1.5,
        step: 0.25,
        count: 13,
    }
}

/// X6 <= 0 is leaf 0; otherwise X7 <= 0 is leaf 1, else leaf 2.
fn quadrant_tree(schema: Schema, n: usize) -> ProfileTree {
    let leaf = |id| ProfileNode::Leaf {
        id,
        n: 0,
        class_counts: vec![0],
    };
    ProfileTree {
        schema,
        nodes: vec![
            ProfileNode::Internal {
                variable: 5,
                rule: SplitRule::Threshold { value: 0.0 },
                left: 1,
                right: 2,
                n,
            },
            leaf(0),
            ProfileNode::Internal {
                variable: 6,
                rule: SplitRule::Threshold { value: 0.0 },
                left: 3,
                right: 4,
                n,
            },
            leaf(1),
            leaf(2),
        ],
        leaf_count: 3,
        min_leaf_size: 1,
    }
}

/// Signed `1 - p` from a univariate Cox fit and a log-rank test on the rows.
fn leaf_value_oracle(d: &SurvivalDataset, rows: &[usize]) -> f64 {
    let t: Vec<f64> = rows.iter().map(|&i| d.times()[i]).collect();
    let e: Vec<bool> = rows.iter().map(|&i| d.events()[i]).collect();
    let w = Array2::from_shape_fn((rows.len(), 1), |(k, _)| f64::from(d.treatments()[rows[k]]));
    let hr = cox_fit(&t, &e, w.view()).unwrap().hazard_ratio(0);
    let arm = |a: u8| -> (Vec<f64>, Vec<bool>) {
        let r: Vec<usize> = rows.iter().copied().filter(|&i| d.treatments()[i] == a).collect();
        (r.iter().map(|&i| d.times()[i]).collect(), r.iter().map(|&i| d.events()[i]).collect())
    };
    let (tc, ec) = arm(0);
    let (tt, et) = arm(1);
    let p = logrank_test(&tc, &ec, &tt, &et).unwrap().p_value;
    if hr <= 1.0 {
        1.0 - p
    } else {
        p - 1.0
    }
}

#[test]
fn single_leaf_gives_a_flat_map() {
    let d = Scenario::Null.spec(300).generate(1).dataset;
    let tree = ProfileTree::single_leaf(d.schema().clone(), 300, 1);
    let g = gradient_for_tree(&tree, &d, (5, 6), small_axis()).unwrap();
    let v = g.values[[0, 0]];
    assert!(g.values.iter().all(|&x| x == v));
    assert!((v - leaf_value_oracle(&d, &(0..300).collect::<Vec<_>>())).abs() < 1e-12);
}

#[test]
fn quadrant_tree_pixels_match_leaf_statistics() {
    let d = Scenario::One.spec(600).generate(2).dataset;
    let tree = quadrant_tree(d.schema().clone(), 600);
    let x = d.covariates();
    let rows_of = |leaf: usize| -> Vec<usize> {
        (0..600)
            .filter(|&i| {
                let l = if x[[i, 5]] <= 0.0 {
                    0
                } else if x[[i, 6]] <= 0.0 {
                    1
                } else {
                    2
                };
                l == leaf
            })
            .collect()
    };
    let expected: Vec<f64> = (0..3).map(|l| leaf_value_oracle(&d, &rows_of(l))).collect();
    let axis = small_axis();
    let g = gradient_for_tree(&tree, &d, (5, 6), axis).unwrap();
    for i in 0..axis.count {
        for j in 0..axis.count {
            let (a, b) = (axis.coordinate(j), axis.coordinate(i));
            let leaf = if a <= 0.0 {
                0
            } else if b <= 0.0 {
                1
            } else {
                2
            };
            assert!((g.values[[i, j]] - expected[leaf]).abs() < 1e-12, "pixel ({i},{j})");
        }
    }
    // the treated quadrant favours treatment
    assert!(expected[2] > 0.5);
}

#[test]
fn default_axis_shape_and_bad_pair() {
    let d = Scenario::Null.spec(100).generate(3).dataset;
    let tree = ProfileTree::single_leaf(d.schema().clone(), 100, 1);
    let g = gradient_for_tree(&tree, &d, (5, 6), GridAxis::default()).unwrap();
    assert_eq!(g.values.dim(), (301, 301));
    assert_eq!(GridAxis::default().coordinate(300), 1.5);
    assert!(gradient_for_tree(&tree, &d, (5, 5), small_axis()).is_err());
    assert!(gradient_for_tree(&tree, &d, (5, 10), small_axis()).is_err());
    let csv = g.to_csv();
    assert_eq!(csv.lines().count(), 301);
    assert!(g.to_pgm().starts_with("P2\n301 301\n255\n"));
}

#[test]
fn true_gradient_marks_the_quadrant() {
    let g = true_gradient(&Scenario::One.spec(10), (5, 6), small_axis());
    let axis = small_axis();
    for i in 0..axis.count {
        for j in 0..axis.count {
            let inside = axis.coordinate(j) > 0.0 && axis.coordinate(i) > 0.0;
            assert_eq!(g.values[[i, j]], if inside { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn averaging_examples() {
    let mut rng = common::rng(4);
    let grids: Vec<GradientGrid> = (0..5)
        .map(|_| GradientGrid {
            values: Array2::from_shape_fn((7, 7), |_| rng.random_range(-1.0..1.0)),
            axis: small_axis(),
            pair: (5, 6),
        })
        .collect();
    let same = averaged_gradient(&[grids[0].clone(), grids[0].clone()]).unwrap();
    assert_eq!(same.values, grids[0].values);

    let mut neg = grids[0].clone();
    neg.values.mapv_inplace(|v| -v);
    let zero = averaged_gradient(&[grids[0].clone(), neg]).unwrap();
    assert!(zero.values.iter().all(|v| v.abs() < 1e-15));

    let mean = averaged_gradient(&grids).unwrap();
    for i in 0..7 {
        for j in 0..7 {
            let oracle = grids.iter().map(|g| g.values[[i, j]]).sum::<f64>() / 5.0;
            assert!((mean.values[[i, j]] - oracle).abs() < 1e-15);
        }
    }

    let mut odd = grids[0].clone();
    odd.values = Array2::zeros((3, 3));
    assert!(averaged_gradient(&[grids[0].clone(), odd]).is_err());
    assert!(averaged_gradient(&[]).is_err());
}

#[test]
fn recovery_examples() {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let all = recovery_from_sets("m", &[s(&["X6", "X7"]), s(&["X7", "X6", "X6"])], &["X6", "X7"], 10).unwrap();
    assert_eq!(all.rate("X6"), Some(1.0));
    assert_eq!(all.all_targets_rate, 1.0);
    assert_eq!(all.covariate_count_distribution[2], 1.0);

    let none = recovery_from_sets("m", &[s(&[]), s(&["X1"])], &["X6", "X7"], 10).unwrap();
    assert_eq!(none.rate("X6"), Some(0.0));
    assert_eq!(none.rate("X7"), Some(0.0));
    assert_eq!(none.all_targets_rate, 0.0);
    assert_eq!(none.covariate_count_distribution[0], 0.5);
    assert_eq!(none.covariate_count_distribution[1], 0.5);

    let mixed = recovery_from_sets("m", &[s(&["X6"]), s(&["X7"]), s(&["X6", "X7"]), s(&["X2"])], &["X6", "X7"], 10).unwrap();
    assert_eq!(mixed.rate("X6"), Some(0.5));
    assert_eq!(mixed.all_targets_rate, 0.25);
    assert!(recovery_from_sets("m", &[], &["X6"], 10).is_err());
}

fn separated_dataset(n: usize, seed: u64) -> SurvivalDataset {
    let mut rng = common::rng(seed);
    let schema = Schema {
        covariates: vec![CovariateSpec::numeric("B"), CovariateSpec::numeric("N")],
    };
    let x = Array2::from_shape_fn((n, 2), |(i, j)| {
        // standardizing would inflate pure noise, so N tracks B
        let b = (i % 2) as f64;
        if j == 0 {
            b
        } else {
            b + rng.random_range(-0.01..0.01)
        }
    });
    let times: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..100.0)).collect();
    let events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
    let w: Vec<u8> = (0..n).map(|i| ((i / 2) % 2) as u8).collect();
    SurvivalDataset::new(times, events, w, x, schema).unwrap()
}

#[test]
fn baseline_finds_separated_binary() {
    let d = separated_dataset(200, 5);
    let opts = BaselineOptions {
        min_leaf_size: 20,
        ..BaselineOptions::default()
    };
    let r = kmeans_baseline(&d, &opts, 0.05).unwrap();
    assert_eq!(r.k, Some(2));
    assert_eq!(r.num_leaves, 2);
    assert_eq!(r.variables_used(), vec!["B".to_string()]);
    for i in 0..200 {
        assert_eq!(r.leaf_ids[i] == r.leaf_ids[0], i % 2 == 0);
    }
}

#[test]
fn baseline_partition_ignores_outcomes() {
    let d = Scenario::One.spec(300).generate(6).dataset;
    let mut rng = common::rng(7);
    let mut times = d.times().to_vec();
    let mut events = d.events().to_vec();
    let mut w = d.treatments().to_vec();
    for i in (1..300).rev() {
        let j = rng.random_range(0..=i);
        times.swap(i, j);
        events.swap(i, j);
        w.swap(i, j);
    }
    let shuffled = d.with_outcomes(times, events, w).unwrap();
    let opts = BaselineOptions::default();
    let a = kmeans_baseline(&d, &opts, 0.01).unwrap();
    let b = kmeans_baseline(&shuffled, &opts, 0.01).unwrap();
    assert_eq!(a.leaf_ids, b.leaf_ids);
    assert_eq!(a.tree, b.tree);
}
