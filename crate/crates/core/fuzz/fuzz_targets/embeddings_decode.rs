#![no_main]

use libfuzzer_sys::fuzz_target;
use tmkd::textguide::EmbeddingTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = EmbeddingTable::from_bytes(data) {
        assert_eq!(table.to_bytes(), data);
    }
});
