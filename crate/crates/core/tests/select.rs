mod common;

use std::collections::BTreeMap;

use common::{planted, PLANTED_SUPPORT};
use tramls::basis::BasisSpec;
use tramls::data::Dataset;
use tramls::fit::{fit, FitOptions};
use tramls::link::Link;
use tramls::select::{select, sic, SelectOptions, SubsetPath};
use tramls::ModelSpec;

fn spec() -> ModelSpec {
    ModelSpec::new(
        BasisSpec::bernstein(3, PLANTED_SUPPORT.0, PLANTED_SUPPORT.1),
        Link::Logit,
    )
}

fn names(d: &Dataset) -> Vec<String> {
    d.columns.clone()
}

fn run(d: &Dataset, opts: &SelectOptions) -> SubsetPath {
    select(d, &spec(), &names(d), opts).unwrap()
}

fn check_path_invariants(p: &SubsetPath) {
    let j = p.covariates.len();
    for e in &p.entries {
        assert!(e.active.len() <= e.s);
        for k in 0..j {
            let on_loc = e.active.contains(&k) || p.mandatory.contains(&k);
            let on_sc = e.active.contains(&(j + k)) || p.mandatory.contains(&(j + k));
            if !on_loc {
                assert_eq!(e.beta[k], 0.0);
            }
            if !on_sc {
                assert_eq!(e.gamma[k], 0.0);
            }
        }
        assert_eq!(e.sic, sic(e.loglik, e.s, j, p.n_obs).unwrap());
    }
}

#[test]
fn splicing_moves_from_a_wrong_start_to_the_truth() {
    let d = planted(1000, 2.0, 1.5, 3, 1);
    // J = 5: loc:x1 = 0, scale:x2 = 6
    let opts = SelectOptions {
        s_max: Some(2),
        initial: BTreeMap::from([(1, vec![3]), (2, vec![2, 8])]),
        ..SelectOptions::default()
    };
    let p = run(&d, &opts);
    check_path_invariants(&p);
    assert_eq!(p.entries[2].active, vec![0, 6]);
    assert!(p.entries[2].sweeps > 1);
    assert_eq!(p.selected, 2);
}

#[test]
fn infinite_threshold_never_exchanges() {
    let d = planted(400, 2.0, 1.5, 2, 2);
    let opts = SelectOptions {
        s_max: Some(2),
        tau: Some(vec![f64::INFINITY; 2]),
        initial: BTreeMap::from([(1, vec![2]), (2, vec![2, 3])]),
        ..SelectOptions::default()
    };
    let p = run(&d, &opts);
    assert_eq!(p.entries[1].active, vec![2]);
    assert_eq!(p.entries[2].active, vec![2, 3]);
    assert!(p.entries.iter().all(|e| e.sweeps <= 1));
}

#[test]
fn full_support_selects_every_index() {
    let d = planted(300, 1.0, 1.0, 1, 3);
    let opts = SelectOptions {
        mandatory: vec![1],
        ..SelectOptions::default()
    };
    let p = run(&d, &opts);
    check_path_invariants(&p);
    let last = p.entries.last().unwrap();
    assert_eq!(last.s, 5);
    assert_eq!(last.active, vec![0, 2, 3, 4, 5]);
}

#[test]
fn duplicated_columns_tie_to_the_lower_index() {
    let d0 = planted(500, 2.5, 0.0, 0, 4);
    let x1 = d0.column("x1").unwrap();
    let x2 = d0.column("x2").unwrap();
    let rows: Vec<Vec<f64>> = (0..d0.len()).map(|i| vec![x1[i], x1[i], x2[i]]).collect();
    let d = Dataset::new(d0.responses.clone(), &rows, vec!["a".into(), "b".into(), "c".into()]).unwrap();
    let opts = SelectOptions {
        s_max: Some(1),
        ..SelectOptions::default()
    };
    let p = run(&d, &opts);
    assert_eq!(p.entries[1].active, vec![0]);
    let swapped = SelectOptions {
        initial: BTreeMap::from([(1, vec![1])]),
        ..opts
    };
    // starting on the copy, nothing improves on it by more than tau
    assert_eq!(run(&d, &swapped).entries[1].active, vec![1]);
}

#[test]
fn a_strong_location_effect_enters_first() {
    for seed in 0..3 {
        let d = planted(500, 2.5, 0.0, 4, 10 + seed);
        let opts = SelectOptions {
            s_max: Some(1),
            ..SelectOptions::default()
        };
        assert_eq!(run(&d, &opts).entries[1].active, vec![0]);
    }
}

#[test]
fn mandatory_coefficients_are_always_fitted() {
    let d = planted(500, 1.5, 1.0, 3, 5);
    let j = 5;
    let opts = SelectOptions {
        s_max: Some(3),
        mandatory: vec![j + 1],
        ..SelectOptions::default()
    };
    let p = run(&d, &opts);
    check_path_invariants(&p);
    assert_eq!(p.mandatory, vec![j + 1]);
    for e in &p.entries {
        assert!(!e.active.contains(&(j + 1)));
        assert_ne!(e.gamma[1], 0.0);
    }
}

#[test]
fn splicing_agrees_with_exhaustive_search_on_a_small_problem() {
    let d = planted(400, 1.5, 1.5, 1, 6);
    let cov = names(&d);
    let j = cov.len();
    let opts = SelectOptions {
        s_max: Some(2),
        ..SelectOptions::default()
    };
    let p = run(&d, &opts);
    check_path_invariants(&p);
    let fopts = FitOptions {
        compute_vcov: false,
        ..FitOptions::default()
    };
    for e in p.entries.iter().skip(1) {
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1 << (2 * j)) {
            if mask.count_ones() as usize != e.s {
                continue;
            }
            let loc: Vec<&str> = (0..j).filter(|k| mask >> k & 1 == 1).map(|k| cov[k].as_str()).collect();
            let sc: Vec<&str> = (0..j)
                .filter(|k| mask >> (j + k) & 1 == 1)
                .map(|k| cov[k].as_str())
                .collect();
            let s = spec().with_centered(true).with_location(&loc).with_scale(&sc);
            best = best.max(fit(&d, &s, &fopts).unwrap().loglik);
        }
        assert!((e.loglik - best).abs() < 1e-6, "s = {}: {} vs {best}", e.s, e.loglik);
    }
}

#[test]
fn pure_noise_mostly_selects_the_empty_model() {
    let mut empty = 0;
    let reps = 15;
    for seed in 0..reps {
        let d = planted(300, 0.0, 0.0, 2, 100 + seed);
        let opts = SelectOptions {
            s_max: Some(3),
            ..SelectOptions::default()
        };
        let p = run(&d, &opts);
        check_path_invariants(&p);
        empty += (p.selected == 0) as usize;
    }
    assert!(empty * 2 > reps as usize, "{empty} of {reps}");
}

#[test]
fn selection_is_deterministic() {
    let d = planted(300, 1.0, 1.0, 2, 7);
    let opts = SelectOptions {
        s_max: Some(3),
        ..SelectOptions::default()
    };
    assert_eq!(run(&d, &opts), run(&d, &opts));
}

#[test]
fn invalid_options_are_rejected() {
    let d = planted(100, 1.0, 1.0, 0, 8);
    let bad = [
        SelectOptions {
            s_max: Some(5),
            ..SelectOptions::default()
        },
        SelectOptions {
            k_max: 0,
            ..SelectOptions::default()
        },
        SelectOptions {
            mandatory: vec![4],
            ..SelectOptions::default()
        },
        SelectOptions {
            tau: Some(vec![1.0]),
            ..SelectOptions::default()
        },
        SelectOptions {
            initial: BTreeMap::from([(2, vec![0, 0])]),
            ..SelectOptions::default()
        },
    ];
    for o in &bad {
        assert!(select(&d, &spec(), &names(&d), o).is_err(), "{o:?}");
    }
}
