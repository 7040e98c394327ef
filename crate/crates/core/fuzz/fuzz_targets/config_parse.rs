#![no_main]

use libfuzzer_sys::fuzz_target;
use tmkd::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::parse(text) {
        if cfg.validate().is_ok() {
            assert_eq!(RunConfig::parse(&cfg.resolved()).unwrap(), cfg);
        }
    }
});
