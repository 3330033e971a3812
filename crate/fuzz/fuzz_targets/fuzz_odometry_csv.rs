#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = lie_cstep::data::parse_odometry_csv(std::io::Cursor::new(data));
});
