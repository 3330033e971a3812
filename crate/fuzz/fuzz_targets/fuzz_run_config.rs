//! The JSON run-configuration parser rejects unknown keys and bad values
//! with errors, never panics.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = lie_cstep::data::parse_run_config(data);
});
