#![no_main]

use driftflow_cli::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = parse_config(text) {
        // Anything accepted must survive a round trip and resolve.
        let again = toml::to_string(&config).expect("accepted configs serialize");
        assert_eq!(parse_config(&again).expect("round trip"), config);
        config.scenario().expect("validated configs resolve");
    }
});
