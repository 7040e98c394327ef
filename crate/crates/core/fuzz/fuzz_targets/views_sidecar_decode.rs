#![no_main]

use libfuzzer_sys::fuzz_target;
use tmkd::viewgen::sidecar;

fuzz_target!(|data: &[u8]| {
    if let Ok(views) = sidecar::decode(data) {
        assert_eq!(sidecar::encode(&views), data);
    }
});
