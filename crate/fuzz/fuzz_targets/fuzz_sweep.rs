#![no_main]

use driftflow_cli::parse_sweep;
use driftflow_cli::sweep::MAX_RUNS;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 8192 {
        return;
    }
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(plan) = parse_sweep(text) {
        assert!(!plan.runs.is_empty() && plan.runs.len() <= MAX_RUNS);
        for (i, run) in plan.runs.iter().enumerate() {
            assert_eq!(run.index, i);
            assert!(run.config.output.is_none());
            run.config.validate().expect("expanded runs are valid");
        }
    }
});
