#![no_main]

use libfuzzer_sys::fuzz_target;
use slotvid_core::format::decode_i32;

fuzz_target!(|data: &[u8]| {
    if let Ok((shape, values)) = decode_i32(data) {
        assert_eq!(shape.iter().product::<usize>(), values.len());
    }
});
