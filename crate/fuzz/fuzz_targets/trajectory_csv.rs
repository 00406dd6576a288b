#![no_main]

use libfuzzer_sys::fuzz_target;
use stasplit::csvio::{read_trajectory_csv, write_trajectory_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // accepted tables survive a write/read cycle with their hash
    if let Ok((hash, trajectory)) = read_trajectory_csv(text) {
        let mut out = Vec::new();
        write_trajectory_csv(&trajectory, &hash, &mut out).expect("writes to memory");
        let (again, back) = read_trajectory_csv(std::str::from_utf8(&out).unwrap()).expect("round trip");
        assert_eq!(again, hash);
        assert_eq!(back.times.len(), trajectory.times.len());
    }
});
