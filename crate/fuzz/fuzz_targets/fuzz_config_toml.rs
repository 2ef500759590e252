//! Fuzz the TOML configuration parser: no panics on arbitrary documents, and
//! accepted configs must survive an emit/parse round trip unchanged.

#![no_main]
use dualgfl::config::SimConfig;
use libfuzzer_sys::fuzz_target;

const MAX_INPUT: usize = 64 * 1024;

fuzz_target!(|data: &[u8]| {
    if data.len() > MAX_INPUT {
        return;
    }
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = SimConfig::from_toml_str(text) {
        // Validated configs round-trip exactly.
        let emitted = config.to_toml_string().expect("valid config serializes");
        let back = SimConfig::from_toml_str(&emitted).expect("emitted config parses");
        assert_eq!(back, config, "TOML round trip changed the config");
    }
});
