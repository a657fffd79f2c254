//! Feed arbitrary bytes through population-spec parsing, validation, exact
//! enumeration (with a hard atom cap so a hostile spec cannot demand
//! unbounded memory), and the downstream consumers of a valid population.
//! Nothing here may panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use pfaudit::identify::{Mode, Tolerances};
use pfaudit::simulate::{self, DgpSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(spec) = serde_json::from_str::<DgpSpec>(text) else {
        return;
    };
    let Ok(oracle) = simulate::exact_distribution_with_cap(&spec, 4096) else {
        return;
    };

    // A spec that enumerates cleanly must also survive every consumer.
    let tolerances = Tolerances::default();
    let _ = simulate::plugin_estimates(&oracle, Mode::Marginal, &tolerances);
    let _ = simulate::check_implication(&spec, 1e-9);
    let _ = simulate::check_equivalence(&spec, 1e-9);
    let _ = simulate::check_identification(&spec, &tolerances);
    let _ = simulate::sample(&spec, 16, 0, true);
    let _ = oracle.joint_by_group(None);
});
