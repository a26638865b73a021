#![no_main]

use i2lqr::runlog;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(log) = runlog::parse_run_log(text) {
        let _ = runlog::replay(&log);
        let _ = runlog::summary_table(&log);
    }
});
