#![no_main]

use libfuzzer_sys::fuzz_target;
use sdiff::dataio::{parse_interactions, Format};

fuzz_target!(|data: &[u8]| {
    for format in [Format::Tsv, Format::Csv] {
        if let Ok((m, _)) = parse_interactions(data, format) {
            assert!(m.nnz() > 0);
            assert_eq!(m.users().len(), m.n_users());
            assert_eq!(m.items().len(), m.n_items());
        }
    }
});
