#![no_main]

use libfuzzer_sys::fuzz_target;

use bridgegraph::io::read_index;

// The graph-index loader consumes untrusted files; it must reject garbage
// with an error, never panic or over-allocate.
fuzz_target!(|data: &[u8]| {
    let mut r = data;
    let _ = read_index(&mut r);
});
