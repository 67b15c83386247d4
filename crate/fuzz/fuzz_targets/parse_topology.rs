#![no_main]

use ampf_core::topology::Topology;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(topo) = Topology::parse(text) {
        let again = Topology::parse(&topo.to_text()).expect("rendered topology parses");
        assert_eq!(again.to_text(), topo.to_text());
    }
});
