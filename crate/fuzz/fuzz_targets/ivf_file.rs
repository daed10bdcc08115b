#![no_main]

use libfuzzer_sys::fuzz_target;

use bridgegraph::ivf::read_ivf;

// The inverted-file index loader consumes untrusted files; it must reject garbage
// with an error, never panic or over-allocate.
fuzz_target!(|data: &[u8]| {
    let mut r = data;
    let _ = read_ivf(&mut r);
});
