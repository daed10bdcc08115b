#![no_main]

use libfuzzer_sys::fuzz_target;

use bridgegraph::{Dataset, Format};

// Decoding arbitrary bytes must return Ok or a structured error, never
// panic, and any accepted dataset must be internally consistent.
fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = Dataset::read(data, Format::Fvecs) {
        assert_eq!(ds.data().len(), ds.count() * ds.dim());
    }
});
