//! The IMU CSV parser must never panic on arbitrary input, only return
//! structured errors.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = lie_cstep::data::parse_imu_csv(std::io::Cursor::new(data));
});
