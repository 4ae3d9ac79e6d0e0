#![no_main]

use libfuzzer_sys::fuzz_target;
use sdiff::dataio::parse_user_list;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(users) = parse_user_list(text) {
            assert!(users.iter().all(|u| !u.is_empty() && !u.contains(char::is_whitespace)));
        }
    }
});
