//! Fuzz the partition fixture format (JSON map server-id -> client list).
//! The deserializer must reject duplicate memberships and never panic.

#![no_main]
use dualgfl::hedonic::Partition;
use libfuzzer_sys::fuzz_target;

const MAX_INPUT: usize = 64 * 1024;

fuzz_target!(|data: &[u8]| {
    if data.len() > MAX_INPUT {
        return;
    }
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(partition) = serde_json::from_str::<Partition>(text) {
        // Accepted partitions are structurally disjoint by construction;
        // they must survive a round trip.
        let emitted = serde_json::to_string(&partition).expect("partition serializes");
        let back: Partition = serde_json::from_str(&emitted).expect("emitted partition parses");
        assert_eq!(back, partition, "JSON round trip changed the partition");
        let _ = partition.n_assigned();
        let _ = partition.max_coalition_size();
    }
});
