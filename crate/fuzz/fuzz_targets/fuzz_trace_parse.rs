#![no_main]

use libfuzzer_sys::fuzz_target;

use seesaw_core::trace::{audit, Trace};

fuzz_target!(|data: &[u8]| {
    let Ok(input) = std::str::from_utf8(data) else {
        return;
    };
    // Parsing and auditing arbitrary trace files must never panic.
    if let Ok(trace) = Trace::parse(input) {
        let _ = audit(&trace);
        let _ = trace.to_jsonl();
    }
});
