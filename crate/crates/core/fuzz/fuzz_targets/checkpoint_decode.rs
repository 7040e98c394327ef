#![no_main]

use libfuzzer_sys::fuzz_target;
use tmkd::models::{Checkpoint, Role};

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::from_bytes(data) {
        assert_eq!(ckpt.to_bytes(), data);
        let _ = ckpt.to_mlp(Role::Student);
    }
});
