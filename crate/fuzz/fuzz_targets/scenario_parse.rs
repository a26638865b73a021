#![no_main]

use i2lqr::scenario::Scenario;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = Scenario::from_toml_str(text) {
        // anything accepted must survive a write and reload unchanged
        let again = Scenario::from_toml_str(&s.to_toml_string()).expect("written scenario reloads");
        assert_eq!(again, s);
    }
});
