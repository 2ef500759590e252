//! Fuzz the preference-profile wire format (ordered lists of id-sets).
//! Deserialization revalidates the weak-order invariants.

#![no_main]
use dualgfl::preference::PreferenceProfile;
use libfuzzer_sys::fuzz_target;

const MAX_INPUT: usize = 64 * 1024;

fuzz_target!(|data: &[u8]| {
    if data.len() > MAX_INPUT {
        return;
    }
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(profile) = serde_json::from_str::<PreferenceProfile>(text) {
        // Accepted profiles rank every candidate exactly once.
        let total: usize = profile.classes().iter().map(|c| c.len()).sum();
        assert_eq!(total, profile.n_candidates());
        assert!(!profile.top_class().is_empty());
        for class in profile.classes() {
            for &s in class {
                assert!(profile.rank_of(s).is_some());
            }
        }
        let emitted = serde_json::to_string(&profile).expect("profile serializes");
        let back: PreferenceProfile = serde_json::from_str(&emitted).expect("emitted profile parses");
        assert_eq!(back, profile, "JSON round trip changed the profile");
    }
});
