#![no_main]

use libfuzzer_sys::fuzz_target;
use stasplit::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // an accepted config must echo to a document that parses back to itself
    if let Ok(config) = ExperimentConfig::from_toml(text) {
        let echo = ExperimentConfig::from_toml(&config.to_toml()).expect("echo parses");
        assert_eq!(echo, config);
        let _ = config.trap_hash();
    }
});
