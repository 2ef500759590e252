//! Fuzz the CLI ablation-axis argument parser.

#![no_main]
use dualgfl::experiment::{parse_ablation, AblationAxis};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 4096 {
        return;
    }
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(AblationAxis::Capacity(values)) = parse_ablation(text) {
        // Accepted axes are nonempty and strictly positive.
        assert!(!values.is_empty());
        assert!(values.iter().all(|&v| v > 0));
    }
});
