#![no_main]

use ampf_core::classifier::DecisionTree;
use ampf_core::flow::FeatureVector;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(tree) = DecisionTree::parse(text) {
        let _ = tree.predict(&FeatureVector::default());
        let again = DecisionTree::parse(&tree.to_text()).expect("rendered tree parses");
        assert_eq!(again.to_text(), tree.to_text());
    }
});
