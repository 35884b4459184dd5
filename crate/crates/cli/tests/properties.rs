use driftflow_cli::execute::fmt_num;
use driftflow_cli::{parse_config, parse_sweep};
use proptest::prelude::*;

proptest! {
    #[test]
    fn csv_numbers_round_trip_exactly(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        let s = fmt_num(x);
        prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        prop_assert!(!s.contains(','));
    }

    #[test]
    fn sweep_size_is_product_of_axes(a in 1usize..5, b in 1usize..5, c in 1usize..4) {
        let list = |n: usize, base: f64| {
            (0..n).map(|i| format!("{:.3}", base + i as f64 * 0.25)).collect::<Vec<_>>().join(", ")
        };
        let text = format!(
            "name = \"p\"\n[geometry]\nkind = \"round_circle\"\na0 = 1.0\n[sweep]\n\
             \"geometry.a0\" = [{}]\n\"flow.horizon\" = [{}]\n\"seed\" = [{}]\n",
            list(a, 0.5),
            list(b, 0.1),
            (0..c).map(|i| i.to_string()).collect::<Vec<_>>().join(", "),
        );
        let plan = parse_sweep(&text).unwrap();
        prop_assert_eq!(plan.runs.len(), a * b * c);
        let mut names: Vec<&str> = plan.runs.iter().map(|r| r.config.name.as_str()).collect();
        names.dedup();
        prop_assert_eq!(names.len(), a * b * c);
    }

    #[test]
    fn nonpositive_scales_are_config_errors(a0 in -10.0f64..=0.0) {
        let text = format!("name = \"x\"\n[geometry]\nkind = \"round_circle\"\na0 = {a0:?}\n");
        prop_assert!(parse_config(&text).is_err());
    }
}
