//! Fuzz the topology JSON reader used for reproducibility audits: arbitrary
//! documents must never panic, and documents passing validation must expose
//! working cost queries.

#![no_main]
use dualgfl::topology::Topology;
use libfuzzer_sys::fuzz_target;

const MAX_INPUT: usize = 256 * 1024;

fuzz_target!(|data: &[u8]| {
    if data.len() > MAX_INPUT {
        return;
    }
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(topo) = serde_json::from_str::<Topology>(text) else {
        return;
    };
    if topo.validate().is_ok() {
        // Validated topologies answer cost queries without panicking.
        for client in topo.clients.iter().take(4) {
            for server in topo.server_ids().take(4) {
                let _ = topo.total_cost(client.id, server);
            }
        }
        let emitted = serde_json::to_string(&topo).expect("valid topology serializes");
        let back: Topology = serde_json::from_str(&emitted).expect("emitted topology parses");
        assert_eq!(back, topo, "JSON round trip changed the topology");
    }
});
