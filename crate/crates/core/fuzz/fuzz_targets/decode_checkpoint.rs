#![no_main]

use libfuzzer_sys::fuzz_target;
use sdiff::denoiser::read_checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = read_checkpoint(data) {
        assert_eq!(c.to_bytes(), data);
    }
});
