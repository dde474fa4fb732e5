#![no_main]

use libfuzzer_sys::fuzz_target;

use seesaw_core::scenario::ScenarioConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(input) = std::str::from_utf8(data) else {
        return;
    };
    // Parsing and validating arbitrary configs must never panic; a
    // config that parses must survive validation without panicking
    // and be runnable or cleanly rejected.
    if let Ok(config) = ScenarioConfig::from_toml_str(input) {
        let _ = config.registered_sources();
        let _ = seesaw_core::trace::termination_bound(&config);
    }
});
