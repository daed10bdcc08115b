#![no_main]

use libfuzzer_sys::fuzz_target;

use bridgegraph::read_id_lists;

fuzz_target!(|data: &[u8]| {
    let _ = read_id_lists(data);
});
