#![no_main]

use libfuzzer_sys::fuzz_target;
use slotvid_core::format::decode_sparse;

fuzz_target!(|data: &[u8]| {
    let _ = decode_sparse(data);
});
