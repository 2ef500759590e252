//! Fuzz the auction fixture format and both winner-selection solvers:
//! accepted instances must yield feasible greedy outcomes that the exact
//! solver always weakly dominates.

#![no_main]
use dualgfl::auction::AuctionFixture;
use libfuzzer_sys::fuzz_target;

const MAX_INPUT: usize = 64 * 1024;
// Keep exact enumeration cheap per input.
const MAX_FUZZ_BIDS: usize = 10;

fuzz_target!(|data: &[u8]| {
    if data.len() > MAX_INPUT {
        return;
    }
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(fixture) = AuctionFixture::from_json(text) else {
        return;
    };
    if fixture.bids.len() > MAX_FUZZ_BIDS || fixture.m > MAX_FUZZ_BIDS {
        return;
    }
    let sane = fixture
        .bids
        .iter()
        .all(|b| b.price.abs() < 1e12 && b.qualities.iter().all(|q| *q < 1e12));
    if !sane {
        return;
    }
    let Ok(greedy) = fixture.run_greedy() else {
        return;
    };
    assert!(
        greedy.check_feasible(fixture.m, fixture.e_max),
        "greedy outcome violates its constraints"
    );
    let exact = fixture.run_exact().expect("exact solves whatever greedy solved");
    assert!(exact.check_feasible(fixture.m, fixture.e_max));
    assert!(
        exact.total_score >= greedy.total_score - 1e-6 * greedy.total_score.abs().max(1.0),
        "exact {} fell below greedy {}",
        exact.total_score,
        greedy.total_score
    );
});
