//! Acceptance criteria, one test per criterion. Every test writes exactly
//! one `C## PASS|FAIL` line with the measured quantities to stderr before it
//! asserts, so the plain test log doubles as a report.
//!
//! The Monte Carlo criteria run at desk scale. Tolerances are pinned below.

mod common;

use std::io::Write as _;
use std::sync::OnceLock;

use dense_rsf::calibration::{ks_distance, ks_uniform, CalibrationResult};
use dense_rsf::cluster::spectral_cluster;
use dense_rsf::ensemble::{dense_train, expand_grid, ParamGrid};
use dense_rsf::evaluation::{covariate_recovery, BaselineOptions};
use dense_rsf::forest::{
    best_split, candidate_splits, proximity_from_membership, split_statistics, train_forest, ForestConfig,
    MembershipMatrix, ProximityMatrix, SplitRule, SplitRuleParams, SplitStatistics,
};
use dense_rsf::pipeline::{calibrate_simulated, homogeneity_statistic, run_pipeline, run_study, PipelineConfig, ReplicateOutcome, StudyConfig};
use dense_rsf::profile::{selection_metric, ProfileResult, SelectionOptions};
use dense_rsf::rng::{derive_seed, stream_rng};
use dense_rsf::simgen::{Region, Scenario};
use dense_rsf::survival::{chi2_sf, concordance, cox_fit, logrank_test};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const ALPHA: f64 = 0.01;

const C1_N: usize = 400;
const C1_CALIBRATION_REPLICATES: usize = 50;
const C1_FRESH: usize = 100;
const C1_MAX_DECLARED: usize = 5;

const STUDY_N: usize = 600;
const STUDY_REPLICATES: usize = 20;
const STUDY_CALIBRATION_REPLICATES: usize = 50;
const C2_SINGLE_RATE: f64 = 0.70;
const C2_BOTH_RATE: f64 = 0.60;
const C3_MIN_BIDIRECTIONAL: usize = 14;
const C3_LEAF_P: f64 = 0.05;

const C5_TOL: f64 = 1e-3;
const C5_GRID_STEP: f64 = 1e-4;

const C10_N: usize = 20_000;
const C10_HR_TOL: f64 = 0.03;
const C10_KS: f64 = 0.08;

const C11_TOL: f64 = 1e-3;

const C13_SEPARATED_KS: f64 = 0.5;
const C13_HOMOGENEOUS_KS: f64 = 0.25;

/// Written to the raw stderr handle so the line survives output capture.
fn report(id: &str, pass: bool, detail: String) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{id} {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn c1_grid() -> ParamGrid {
    // four configurations of fifty trees
    let mut g = ParamGrid::desk();
    g.nodesize = vec![120];
    g.ntree = 50;
    g
}

fn study_selection() -> SelectionOptions {
    SelectionOptions::default()
}

fn min_p_leaf(p: &ProfileResult) -> f64 {
    p.per_k.iter().map(|d| d.p_leaf).fold(1.0, f64::min)
}

fn group(c: &CalibrationResult, name: &str) -> Vec<f64> {
    c.groups.iter().find(|(g, _)| g == name).map(|(_, v)| v.clone()).unwrap_or_default()
}

struct Desk {
    calibration: CalibrationResult,
    scenario_one: Vec<ReplicateOutcome>,
}

/// Threshold calibrated on simulated null and global data at the study
/// sample size, then twenty scenario-1 replicates. Shared by C2, C4, C13.
fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let grid = ParamGrid::desk();
        let calibration =
            calibrate_simulated(STUDY_N, STUDY_CALIBRATION_REPLICATES, ALPHA, 101, &grid, &study_selection()).unwrap();
        let scenario_one = run_study(&study(Scenario::One, calibration.p_star)).unwrap();
        Desk {
            calibration,
            scenario_one,
        }
    })
}

fn study(scenario: Scenario, p_star: f64) -> StudyConfig {
    StudyConfig {
        spec: scenario.spec(STUDY_N),
        replicates: STUDY_REPLICATES,
        seed: 202,
        grid: ParamGrid::desk(),
        selection: study_selection(),
        baseline: BaselineOptions::default(),
        p_star,
    }
}

#[test]
fn c01_type_one_error_after_calibration() {
    let grid = c1_grid();
    let options = study_selection();
    let calibration = calibrate_simulated(C1_N, C1_CALIBRATION_REPLICATES, ALPHA, 7, &grid, &options).unwrap();
    let p_star = calibration.p_star;
    let declared = (0..C1_FRESH)
        .filter(|&r| {
            let scenario = if r % 2 == 0 { Scenario::Null } else { Scenario::Global };
            let data = scenario.spec(C1_N).generate(derive_seed(0xF2E5, r as u64)).dataset;
            let p = homogeneity_statistic(&data, &grid, &options).unwrap();
            selection_metric(p, p_star) > 0.0
        })
        .count();
    let pass = declared <= C1_MAX_DECLARED;
    report(
        "C01",
        pass,
        format!("p*={p_star:.3e} declared={declared}/{C1_FRESH} limit={C1_MAX_DECLARED}"),
    );
    assert!(pass);
}

#[test]
fn c02_scenario_one_covariate_recovery() {
    let d = desk();
    let declared: Vec<ProfileResult> =
        d.scenario_one.iter().map(|o| o.proposed.clone()).filter(|p| p.heterogeneous).collect();
    let (x6, x7, both) = if declared.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        let r = covariate_recovery("dense", &declared, &["X6", "X7"]).unwrap();
        (r.rate("X6").unwrap(), r.rate("X7").unwrap(), r.all_targets_rate)
    };
    let pass = !declared.is_empty() && x6 >= C2_SINGLE_RATE && x7 >= C2_SINGLE_RATE && both >= C2_BOTH_RATE;
    report(
        "C02",
        pass,
        format!(
            "declared={}/{STUDY_REPLICATES} X6={x6:.2} X7={x7:.2} both={both:.2} need {C2_SINGLE_RATE}/{C2_SINGLE_RATE}/{C2_BOTH_RATE}",
            declared.len()
        ),
    );
    assert!(pass);
}

fn bidirectional(p: &ProfileResult) -> bool {
    let significant = |benefit: bool| {
        p.leaf_effects.iter().any(|e| match (e.hazard_ratio, e.logrank_p) {
            (Some(hr), Some(q)) => q < C3_LEAF_P && if benefit { hr < 1.0 } else { hr > 1.0 },
            _ => false,
        })
    };
    significant(true) && significant(false)
}

#[test]
fn c03_scenario_three_bidirectional_subgroups() {
    let p_star = desk().calibration.p_star;
    let outcomes = run_study(&study(Scenario::Three, p_star)).unwrap();
    let hits = outcomes.iter().filter(|o| bidirectional(&o.proposed)).count();
    let declared = outcomes.iter().filter(|o| o.proposed.heterogeneous).count();
    let pass = hits >= C3_MIN_BIDIRECTIONAL;
    report(
        "C03",
        pass,
        format!("bidirectional={hits}/{STUDY_REPLICATES} declared={declared} need>={C3_MIN_BIDIRECTIONAL}"),
    );
    assert!(pass);
}

#[test]
fn c04_kmeans_baseline_recovers_less() {
    let d = desk();
    let proposed: Vec<ProfileResult> = d.scenario_one.iter().map(|o| o.proposed.clone()).collect();
    let baseline: Vec<ProfileResult> = d.scenario_one.iter().map(|o| o.baseline.clone()).collect();
    let ours = covariate_recovery("dense", &proposed, &["X6", "X7"]).unwrap().all_targets_rate;
    let theirs = covariate_recovery("kmeans", &baseline, &["X6", "X7"]).unwrap().all_targets_rate;
    let pass = theirs < ours;
    report("C04", pass, format!("both-covariate rate dense={ours:.2} kmeans={theirs:.2} over {STUDY_REPLICATES} replicates"));
    assert!(pass);
}

#[test]
fn c05_cox_matches_likelihood_grid() {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for seed in 0..10u64 {
        let mut rng = common::rng(500 + seed);
        let n = rng.random_range(15..=30);
        let (times, events) = common::censored_sample(&mut rng, n);
        let x = Array2::from_shape_fn((n, 1), |_| StandardNormal.sample(&mut rng));
        let fit = cox_fit(&times, &events, x.view()).unwrap();
        let grid = common::grid_argmax(&times, &events, &x, C5_GRID_STEP);
        worst = worst.max((fit.coefficients[0] - grid).abs());
        checked += 1;
    }
    let pass = checked == 10 && worst <= C5_TOL;
    report("C05", pass, format!("datasets={checked} max|beta-grid|={worst:.2e} tol={C5_TOL:e}"));
    assert!(pass);
}

#[test]
fn c06_concordance_matches_pair_enumeration() {
    let mut agree = 0;
    for seed in 0..100u64 {
        let mut rng = common::rng(600 + seed);
        let n = rng.random_range(5..=50);
        let (times, events) = common::censored_sample(&mut rng, n);
        let risk: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64).collect();
        let (credit, comparable) = common::brute_concordance(&risk, &times, &events);
        let ok = match concordance(&risk, &times, &events) {
            Ok(c) => c.comparable == comparable && c.index == credit / comparable,
            Err(dense_rsf::Error::NoComparablePairs) => comparable == 0.0,
            Err(_) => false,
        };
        agree += usize::from(ok);
    }
    let pass = agree == 100;
    report("C06", pass, format!("exact agreement {agree}/100"));
    assert!(pass);
}

fn proximity_valid(p: &ProximityMatrix) -> bool {
    let d = p.to_dense();
    (0..p.n()).all(|i| {
        d[[i, i]] == 1.0 && (0..p.n()).all(|j| d[[i, j]] == d[[j, i]] && (0.0..=1.0).contains(&d[[i, j]]))
    })
}

#[test]
fn c07_proximity_fixture_and_invariants() {
    // tree 1: {0,1} {2,3} ; tree 2: {0} {1,2} {3}
    let fixture = proximity_from_membership(&MembershipMatrix {
        terminal: Array2::from_shape_vec((4, 2), vec![0, 0, 0, 1, 1, 1, 1, 2]).unwrap(),
        inbag: Array2::from_elem((4, 2), 1),
    });
    let want = [
        [1.0, 0.5, 0.0, 0.0],
        [0.5, 1.0, 0.5, 0.0],
        [0.0, 0.5, 1.0, 0.5],
        [0.0, 0.0, 0.5, 1.0],
    ];
    let hand = (0..4).all(|i| (0..4).all(|j| fixture.value(i, j) == want[i][j]));

    let mut forests = 0;
    let mut valid = 0;
    for (s, scenario) in Scenario::ALL.iter().enumerate() {
        let data = scenario.spec(150).generate(s as u64).dataset;
        let mut grid = ParamGrid::desk();
        grid.nodesize = vec![20, 40];
        grid.ntree = 10;
        for config in expand_grid(&grid).unwrap() {
            forests += 1;
            valid += usize::from(proximity_valid(&train_forest(&data, &config).unwrap().proximity()));
        }
        forests += 1;
        valid += usize::from(proximity_valid(&dense_train(&data, &grid).unwrap().proximity));
    }
    let pass = hand && valid == forests;
    report("C07", pass, format!("hand fixture {} invariants {valid}/{forests}", if hand { "exact" } else { "differs" }));
    assert!(pass);
}

#[test]
fn c08_spectral_recovers_exact_blocks() {
    let mut recovered = 0;
    for trial in 0..100u64 {
        let mut rng = common::rng(800 + trial);
        let k = 2 + (trial % 3) as usize;
        let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(5..20)).collect();
        let (s, truth) = common::block_matrix(&sizes, 0.0, trial);
        let n = truth.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let shuffled = Array2::from_shape_fn((n, n), |(i, j)| s[[order[i], order[j]]]);
        let truth: Vec<usize> = order.iter().map(|&i| truth[i]).collect();
        let labels = spectral_cluster(shuffled.view(), k, trial).unwrap();
        recovered += usize::from(common::same_partition(&labels.labels, &truth));
    }
    let pass = recovered == 100;
    report("C08", pass, format!("exact recovery {recovered}/100"));
    assert!(pass);
}

fn argmax_candidate(
    data: &dense_rsf::SurvivalDataset,
    rows: &[usize],
    cfg: &ForestConfig,
    seed: u64,
    key: impl Fn(&SplitStatistics) -> f64,
) -> Option<(usize, SplitRule)> {
    let mut best: Option<(f64, usize, SplitRule)> = None;
    for (v, rule) in candidate_splits(data, rows, cfg, &mut stream_rng(seed, 0)) {
        if let Some(s) = split_statistics(data, rows, v, &rule, &cfg.split_params, cfg.nodesize) {
            let k = key(&s);
            if best.as_ref().is_none_or(|b| k > b.0) {
                best = Some((k, v, rule));
            }
        }
    }
    best.map(|b| (b.1, b.2))
}

#[test]
fn c09_split_score_limits() {
    let sim = Scenario::One.spec(400);
    let mut agree = [0usize; 2];
    for node in 0..50u64 {
        let data = sim.generate(900 + node).dataset;
        let mut rng = common::rng(900 + node);
        let size = rng.random_range(120..400);
        let rows: Vec<usize> = (0..size).map(|_| rng.random_range(0..400)).collect();
        for (slot, omega1) in [1.0, 0.0].into_iter().enumerate() {
            let cfg = ForestConfig {
                ntree: 1,
                mtry: 4,
                nodesize: 20,
                nodedepth: 3,
                nsplit: 10,
                split_params: SplitRuleParams::new(omega1, 3.5).unwrap(),
                xvar_weights: None,
                seed: node,
            };
            let found = best_split(&data, &rows, &cfg, &mut stream_rng(node, 0)).map(|c| (c.variable, c.rule));
            let want = if omega1 == 1.0 {
                argmax_candidate(&data, &rows, &cfg, node, |s| s.concordance)
            } else {
                argmax_candidate(&data, &rows, &cfg, node, |s| s.interaction_z.abs())
            };
            agree[slot] += usize::from(found.is_some() && found == want);
        }
    }
    let pass = agree == [50, 50];
    report("C09", pass, format!("C-index limit {}/50, interaction limit {}/50", agree[0], agree[1]));
    assert!(pass);
}

#[test]
fn c10_generator_fidelity() {
    let g = Scenario::One.spec(C10_N).generate(1010);
    let d = &g.dataset;
    let rows: Vec<usize> = (0..d.n()).filter(|&i| g.region[i] == Region::Positive).collect();
    let t: Vec<f64> = rows.iter().map(|&i| d.times()[i]).collect();
    let e: Vec<bool> = rows.iter().map(|&i| d.events()[i]).collect();
    // adjusted for the prognostic covariates so the coefficient is conditional
    let x = Array2::from_shape_fn((rows.len(), 3), |(k, j)| match j {
        0 => f64::from(d.treatments()[rows[k]]),
        1 => d.covariates()[[rows[k], 5]],
        _ => d.covariates()[[rows[k], 6]],
    });
    let hr = cox_fit(&t, &e, x.view()).unwrap().hazard_ratio(0);
    let target = (-0.57f64).exp();

    let ps: Vec<f64> = (0..200u64)
        .map(|r| {
            let d = Scenario::Null.spec(200).generate(derive_seed(1011, r)).dataset;
            let (c, w) = d.arms();
            let pick = |rows: &[usize]| -> (Vec<f64>, Vec<bool>) {
                (rows.iter().map(|&i| d.times()[i]).collect(), rows.iter().map(|&i| d.events()[i]).collect())
            };
            let (tc, ec) = pick(&c);
            let (tw, ew) = pick(&w);
            logrank_test(&tc, &ec, &tw, &ew).unwrap().p_value
        })
        .collect();
    let ks = ks_uniform(&ps).unwrap();
    let pass = (hr - target).abs() <= C10_HR_TOL && ks < C10_KS;
    report(
        "C10",
        pass,
        format!("region HR={hr:.4} target={target:.4}±{C10_HR_TOL} null log-rank KS={ks:.3} limit={C10_KS}"),
    );
    assert!(pass);
}

#[test]
fn c11_chi_square_reference_values() {
    let a = chi2_sf(3.841, 1).unwrap();
    let b = chi2_sf(5.991, 2).unwrap();
    let pass = (a - 0.05).abs() <= C11_TOL && (b - 0.05).abs() <= C11_TOL;
    report("C11", pass, format!("sf(3.841,1)={a:.5} sf(5.991,2)={b:.5}"));
    assert!(pass);
}

const C12_CONFIG: &str = r#"
[scenario]
name = "one"
n = 300
seed = 12

[grid]
mtry = [5, 6]
nodedepth = [3]
nsplit = [10]
nodesize = [30]
weight = [0.0, 0.5]
ntree = 8
den = 3.5
minimum_leaf_size = 60

[profile]
k_min = 2
k_max = 4

[calibration]
mode = "permutation"
n_perm = 20
"#;

fn artifact_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn c12_outputs_independent_of_worker_count() {
    let root = tempfile::tempdir().unwrap();
    let runs: Vec<Vec<(String, Vec<u8>)>> = [1usize, 4, 8]
        .iter()
        .map(|&w| {
            let mut config = PipelineConfig::from_toml_str(C12_CONFIG).unwrap();
            let dir = root.path().join(format!("w{w}"));
            config.run.workers = w;
            config.run.output = Some(dir.clone());
            run_pipeline(&config).unwrap();
            artifact_bytes(&dir)
        })
        .collect();
    let identical = runs[1] == runs[0] && runs[2] == runs[0];
    let has_manifest = runs[0].iter().any(|(name, _)| name == "manifest.json");
    let pass = identical && has_manifest && runs[0].len() > 1;
    report("C12", pass, format!("files={} identical across workers 1/4/8: {identical}", runs[0].len()));
    assert!(pass);
}

#[test]
fn c13_scenario_one_p_values_separate_from_homogeneous() {
    let d = desk();
    let null = group(&d.calibration, "null");
    let global = group(&d.calibration, "global");
    let pooled: Vec<f64> = null.iter().chain(&global).copied().collect();
    let signal: Vec<f64> = d.scenario_one.iter().map(|o| min_p_leaf(&o.proposed)).collect();
    let separated = ks_distance(&signal, &pooled).unwrap();
    let homogeneous = ks_distance(&null, &global).unwrap();
    let pass = separated > C13_SEPARATED_KS && homogeneous < C13_HOMOGENEOUS_KS;
    report(
        "C13",
        pass,
        format!("KS(scenario 1, pooled)={separated:.3} >{C13_SEPARATED_KS} KS(null, global)={homogeneous:.3} <{C13_HOMOGENEOUS_KS}"),
    );
    assert!(pass);
}
