#![no_main]

use ampf_core::controller::log::{parse_log, LogRecord};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse_log(text);
    for (i, line) in text.lines().enumerate() {
        let _ = LogRecord::parse_line(line, i + 1);
    }
});
