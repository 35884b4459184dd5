#![no_main]

use driftflow_cli::parse_manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = parse_manifest(text) {
        for f in &m.files {
            assert!(!f.name.contains('/') && !f.name.contains('\\'));
            assert_eq!(f.sha256.len(), 64);
        }
        let again = serde_json::to_string(&m).expect("manifests serialize");
        assert_eq!(parse_manifest(&again).expect("round trip"), m);
    }
});
