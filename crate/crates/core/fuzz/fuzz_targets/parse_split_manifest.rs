#![no_main]

use libfuzzer_sys::fuzz_target;
use sdiff::dataio::{parse_split_manifest, write_split_manifest};

fuzz_target!(|data: &[u8]| {
    if let Ok(split) = parse_split_manifest(data) {
        let mut out = Vec::new();
        write_split_manifest(&split, &mut out).unwrap();
        assert_eq!(parse_split_manifest(out.as_slice()).unwrap(), split);
    }
});
