#![no_main]

use libfuzzer_sys::fuzz_target;
use slotvid_core::checkpoint::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let _ = Checkpoint::decode(data);
});
