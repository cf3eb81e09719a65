mod common;

use proptest::prelude::*;
use toxtrace_core::robustness::{
    flag, gini_impurity, heatmap_grid, region_stats, uniform_edges, FlagThresholds, PopulationItem,
};

fn item(contribution: f64, gini: f64, toxic: bool) -> PopulationItem {
    PopulationItem { language: "x".into(), sentence_id: "s".into(), contribution, gini, toxic }
}

fn population() -> impl Strategy<Value = Vec<PopulationItem>> {
    prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, any::<bool>()), 1..200)
        .prop_map(|v| v.into_iter().map(|(c, g, t)| item(c, g, t)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn gini_matches_definition(items in prop::collection::vec("[a-e]", 1..60)) {
        let g = gini_impurity(&items).unwrap();
        prop_assert!((g - common::brute_gini(&items)).abs() < 1e-12);
        prop_assert!((0.0..1.0).contains(&g));
        let mut rev = items.clone();
        rev.reverse();
        prop_assert_eq!(g, gini_impurity(&rev).unwrap());
    }

    #[test]
    fn flag_is_the_strict_conjunction(c in 0.0f64..=1.0, g in 0.0f64..=1.0, cm in 0.0f64..=1.0, gm in 0.0f64..=1.0) {
        let t = FlagThresholds::new(cm, gm).unwrap();
        prop_assert_eq!(flag(c, g, t), common::brute_flag(c, g, cm, gm));
    }

    #[test]
    fn region_counts_partition_population(pop in population(), cm in 0.0f64..=1.0, gm in 0.0f64..=1.0) {
        let t = FlagThresholds::new(cm, gm).unwrap();
        let r = region_stats(&pop, t).unwrap();
        let flagged = pop.iter().filter(|p| common::brute_flag(p.contribution, p.gini, cm, gm)).count() as u64;
        let toxic = pop.iter().filter(|p| p.toxic).count() as u64;
        prop_assert_eq!(r.flagged, flagged);
        prop_assert_eq!(r.flagged + r.unflagged, pop.len() as u64);
        prop_assert_eq!(r.toxic_total, toxic);
        prop_assert!(r.toxic_flagged <= r.flagged.min(r.toxic_total));
        if let (Some(rate), Some(ratio)) = (r.region_toxic_rate, r.ratio) {
            prop_assert!((ratio - rate / r.overall_toxic_rate).abs() < 1e-9);
        }
    }

    #[test]
    fn heatmap_conserves_items(pop in population(), cb in 1usize..25, gb in 1usize..25) {
        let grid = heatmap_grid(&pop, &uniform_edges(cb), &uniform_edges(gb)).unwrap();
        prop_assert_eq!(grid.total(), pop.len() as u64);
        let toxic: u64 = grid.cells.iter().flatten().map(|c| c.toxic).sum();
        prop_assert_eq!(toxic, pop.iter().filter(|p| p.toxic).count() as u64);
        prop_assert_eq!(grid.cells.len(), gb);
        prop_assert!(grid.cells.iter().all(|row| row.len() == cb));
    }
}

#[test]
fn analytic_gini_values() {
    assert_eq!(gini_impurity(&vec!["same"; 30]).unwrap(), 0.0);
    let distinct: Vec<String> = (0..30).map(|i| i.to_string()).collect();
    assert!((gini_impurity(&distinct).unwrap() - 29.0 / 30.0).abs() < 1e-12);
    assert!((gini_impurity(&["x", "x", "y"]).unwrap() - 4.0 / 9.0).abs() < 1e-12);
}

#[test]
fn heatmap_edges_are_half_open_with_closed_top() {
    let pop = vec![item(0.0, 0.0, false), item(0.5, 0.5, true), item(1.0, 1.0, true)];
    let grid = heatmap_grid(&pop, &uniform_edges(2), &uniform_edges(2)).unwrap();
    assert_eq!(grid.cells[0][0].count, 1);
    assert_eq!(grid.cells[1][1].count, 2);
    assert_eq!(grid.cells[0][1].toxic_rate(), None);
    assert!(heatmap_grid(&[item(1.2, 0.0, false)], &uniform_edges(2), &uniform_edges(2)).is_err());
    assert!(heatmap_grid(&pop, &[0.0, 0.7, 0.5, 1.0], &uniform_edges(2)).is_err());
}

#[test]
fn region_ratio_undefined_without_flags_or_toxicity() {
    let t = FlagThresholds::default();
    let none_flagged = region_stats(&[item(0.9, 0.1, true)], t).unwrap();
    assert_eq!(none_flagged.ratio, None);
    let none_toxic = region_stats(&[item(0.1, 0.95, false)], t).unwrap();
    assert_eq!(none_toxic.ratio, None);
    assert_eq!(none_toxic.toxic_flagged_share, None);
}
