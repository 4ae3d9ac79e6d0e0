#![no_main]

use libfuzzer_sys::fuzz_target;
use sdiff::graph::SpectralBasis;

fuzz_target!(|data: &[u8]| {
    if let Ok(b) = SpectralBasis::from_bytes(data) {
        assert_eq!(b.to_bytes(), data);
    }
});
