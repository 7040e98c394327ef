#![no_main]

use libfuzzer_sys::fuzz_target;
use tmkd::viewgen::ppm;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = ppm::decode(data) {
        assert_eq!(ppm::decode(&ppm::encode(&img)).unwrap(), img);
    }
});
