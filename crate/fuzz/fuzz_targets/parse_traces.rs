#![no_main]

use ampf_core::trace::{parse_traces, write_traces};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(examples) = parse_traces(text) {
        let again = parse_traces(&write_traces(&examples)).expect("rendered traces parse");
        assert_eq!(again.len(), examples.len());
    }
});
