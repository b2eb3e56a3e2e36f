#![no_main]

use libfuzzer_sys::fuzz_target;
use slotvid_cli::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = RunConfig::from_json(text) {
            let _ = config.validate();
            assert_eq!(RunConfig::from_json(&config.to_json()).as_ref(), Ok(&config));
        }
    }
});
