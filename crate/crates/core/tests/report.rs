use proptest::prelude::*;
use serde_json::Value;
use toxtrace_core::report::{
    classify_level, emit, ramp_colour, toxicity_range_table, AtLevel, Format, LanguageRange, HIGH_LEVEL_ABOVE,
    LOW_LEVEL_BELOW,
};
use toxtrace_core::robustness::{GridCell, HeatmapGrid};

fn grid() -> HeatmapGrid {
    let cell = |count, toxic| GridCell { count, toxic };
    HeatmapGrid {
        contribution_edges: vec![0.0, 0.5, 1.0],
        gini_edges: vec![0.0, 0.5, 1.0],
        // 50% low-left, empty low-right, 0% high-left, 25% high-right
        cells: vec![vec![cell(2, 1), cell(0, 0)], vec![cell(3, 0), cell(4, 1)]],
    }
}

#[test]
fn heatmap_svg_matches_golden() {
    let golden = include_str!("golden/heatmap_2x2.svg");
    assert_eq!(grid().to_svg(), golden);
    assert_eq!(emit(&grid(), Format::SvgHeatmap).unwrap(), golden.as_bytes());
}

#[test]
fn ramp_endpoints() {
    assert_eq!(ramp_colour(0.0), "#fee5d9");
    assert_eq!(ramp_colour(1.0), "#a50f15");
    assert_eq!(ramp_colour(2.0), "#a50f15");
}

#[test]
fn heatmap_csv_marks_empty_cells() {
    let csv = String::from_utf8(emit(&grid(), Format::Csv).unwrap()).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "# contribution_edges: 0.0000 0.5000 1.0000");
    assert_eq!(lines[3], "0,0,0.0000,0.5000,0.0000,0.5000,2,1,50.0000");
    assert_eq!(lines[4], "0,1,0.0000,0.5000,0.5000,1.0000,0,0,n/a");
    assert_eq!(lines[5], "1,0,0.5000,1.0000,0.0000,0.5000,3,0,0.0000");
}

#[test]
fn json_is_canonical() {
    let bytes = emit(&grid(), Format::Json).unwrap();
    let value: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(value["schema_version"], 1);
    assert_eq!(bytes, emit(&grid(), Format::Json).unwrap());
    assert!(bytes.ends_with(b"\n"));
}

#[test]
fn level_boundaries_are_medium() {
    assert_eq!(classify_level(HIGH_LEVEL_ABOVE), AtLevel::Medium);
    assert_eq!(classify_level(LOW_LEVEL_BELOW), AtLevel::Medium);
    assert_eq!(classify_level(0.0051), AtLevel::High);
    assert_eq!(classify_level(0.0009), AtLevel::Low);
}

#[test]
fn range_table_keeps_empty_levels() {
    let table = toxicity_range_table(&[LanguageRange { language: "x".into(), toxicity_rate: 0.01, region: None }]);
    let levels: Vec<_> = table.rows.iter().map(|r| (r.range, r.num_languages)).collect();
    assert_eq!(levels, [(AtLevel::High, 1), (AtLevel::Medium, 0), (AtLevel::Low, 0)]);
    assert!(table.rows.iter().all(|r| r.ratio.is_none()));
}

proptest! {
    #[test]
    fn levels_are_monotone(a in 0.0f64..0.02, b in 0.0f64..0.02) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(classify_level(lo) <= classify_level(hi));
    }

    #[test]
    fn range_table_counts_every_language(rates in prop::collection::vec(0.0f64..0.02, 0..30)) {
        let langs: Vec<LanguageRange> = rates
            .iter()
            .enumerate()
            .map(|(i, r)| LanguageRange { language: format!("l{i}"), toxicity_rate: *r, region: None })
            .collect();
        let table = toxicity_range_table(&langs);
        prop_assert_eq!(table.rows.iter().map(|r| r.num_languages).sum::<u64>(), rates.len() as u64);
    }
}
