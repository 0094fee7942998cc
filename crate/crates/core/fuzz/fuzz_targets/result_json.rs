#![no_main]

use libfuzzer_sys::fuzz_target;
use tramls::fit::FitResult;
use tramls::select::SubsetPath;
use tramls::tree::Tree;

// accepts both bare results and the CLI's {schema_version, command, result} documents
fuzz_target!(|data: &[u8]| {
    let Ok(mut doc) = serde_json::from_slice::<serde_json::Value>(data) else {
        return;
    };
    if let Some(inner) = doc.get_mut("result") {
        doc = inner.take();
    }
    if let Ok(f) = serde_json::from_value::<FitResult>(doc.clone()) {
        let _ = serde_json::to_string(&f);
    }
    if let Ok(p) = serde_json::from_value::<SubsetPath>(doc.clone()) {
        let _ = p.entries.len();
    }
    if let Ok(t) = serde_json::from_value::<Tree>(doc) {
        let _ = t.render();
        let _ = t.root.leaves();
    }
});
